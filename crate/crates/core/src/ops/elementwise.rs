use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Largest f64 below one.
const BELOW_ONE: f64 = 1.0 - f64::EPSILON / 2.0;

/// Logistic function, kept inside the open interval `(0, 1)` even where the
/// rounded value would saturate to 0 or 1.
pub fn sigmoid_scalar(x: f64) -> f64 {
    let s = if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    };
    s.clamp(f64::MIN_POSITIVE, BELOW_ONE)
}

/// `ln(1 + e^x)` without overflow for large `x`.
pub fn softplus_scalar(x: f64) -> f64 {
    if x > 30.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

pub fn sigmoid(x: &Tensor) -> Tensor {
    x.map(sigmoid_scalar)
}

pub fn tanh(x: &Tensor) -> Tensor {
    x.map(f64::tanh)
}

pub fn softplus(x: &Tensor) -> Tensor {
    x.map(softplus_scalar)
}

pub fn exp(x: &Tensor) -> Tensor {
    x.map(f64::exp)
}

pub fn log(x: &Tensor) -> Result<Tensor> {
    if let Some(v) = x.data().iter().find(|&&v| v <= 0.0 || v.is_nan()) {
        return Err(Error::invalid("log", format!("non-positive input {v}")));
    }
    Ok(x.map(f64::ln))
}

pub fn add(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    a.zip_map(b, |x, y| x + y)
}

pub fn sub(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    a.zip_map(b, |x, y| x - y)
}

pub fn mul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    a.zip_map(b, |x, y| x * y)
}

pub fn scale(a: &Tensor, s: f64) -> Tensor {
    a.map(|x| x * s)
}

pub fn add_scalar(a: &Tensor, s: f64) -> Tensor {
    a.map(|x| x + s)
}

// Backward passes. Activations take whichever of input/output makes the
// derivative cheapest; the argument name says which.

pub fn sigmoid_backward(output: &Tensor, grad: &Tensor) -> Result<Tensor> {
    output.zip_map(grad, |s, g| g * s * (1.0 - s))
}

pub fn tanh_backward(output: &Tensor, grad: &Tensor) -> Result<Tensor> {
    output.zip_map(grad, |t, g| g * (1.0 - t * t))
}

pub fn softplus_backward(input: &Tensor, grad: &Tensor) -> Result<Tensor> {
    input.zip_map(grad, |x, g| g * sigmoid_scalar(x))
}

pub fn exp_backward(output: &Tensor, grad: &Tensor) -> Result<Tensor> {
    output.zip_map(grad, |e, g| g * e)
}

pub fn log_backward(input: &Tensor, grad: &Tensor) -> Result<Tensor> {
    input.zip_map(grad, |x, g| g / x)
}

pub fn mul_backward(a: &Tensor, b: &Tensor, grad: &Tensor) -> Result<(Tensor, Tensor)> {
    Ok((mul(grad, b)?, mul(grad, a)?))
}
