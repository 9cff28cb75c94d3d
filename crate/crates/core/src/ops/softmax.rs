use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Splits a shape around `axis` into (outer, extent, inner) strides.
pub(crate) fn axis_split(op: &'static str, shape: &[usize], axis: usize) -> Result<(usize, usize, usize)> {
    if axis >= shape.len() {
        return Err(Error::invalid(
            op,
            format!("axis {axis} out of range for rank {}", shape.len()),
        ));
    }
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    Ok((outer, shape[axis], inner))
}

/// `exp((x - max) / t)` normalised along `axis`.
pub fn softmax(input: &Tensor, axis: usize, temperature: f64) -> Result<Tensor> {
    if !(temperature > 0.0) {
        return Err(Error::invalid(
            "softmax",
            format!("temperature must be positive, got {temperature}"),
        ));
    }
    let (outer, n, inner) = axis_split("softmax", input.shape(), axis)?;
    let x = input.data();
    let mut out = vec![0.0; x.len()];
    for o in 0..outer {
        for i in 0..inner {
            let at = |k: usize| (o * n + k) * inner + i;
            let max = (0..n).map(|k| x[at(k)]).fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for k in 0..n {
                let e = ((x[at(k)] - max) / temperature).exp();
                out[at(k)] = e;
                total += e;
            }
            for k in 0..n {
                out[at(k)] /= total;
            }
        }
    }
    Tensor::new(input.shape().to_vec(), out)
}

/// Backward of [`softmax`] given its output.
pub fn softmax_backward(output: &Tensor, grad: &Tensor, axis: usize, temperature: f64) -> Result<Tensor> {
    grad.expect_shape("softmax_backward", "grad", output.shape())?;
    let (outer, n, inner) = axis_split("softmax_backward", output.shape(), axis)?;
    let s = output.data();
    let g = grad.data();
    let mut gx = vec![0.0; s.len()];
    for o in 0..outer {
        for i in 0..inner {
            let at = |k: usize| (o * n + k) * inner + i;
            let dot: f64 = (0..n).map(|k| s[at(k)] * g[at(k)]).sum();
            for k in 0..n {
                gx[at(k)] = s[at(k)] * (g[at(k)] - dot) / temperature;
            }
        }
    }
    Tensor::new(output.shape().to_vec(), gx)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_input() {
        let s = softmax(&Tensor::full(&[1, 4, 2], 3.0), 1, 1.0).unwrap();
        assert!(s.data().iter().all(|&v| v == 0.25));
    }

    #[test]
    fn sharp_temperature() {
        let x = Tensor::new(vec![3], vec![2.0, 1.0, 0.0]).unwrap();
        let s = softmax(&x, 0, 0.01).unwrap();
        assert!(s.data()[0] > 1.0 - 1e-10);
    }

    #[test]
    fn shift_invariant() {
        let x = Tensor::from_fn(&[2, 3, 4], |i| (i as f64 * 0.37).sin());
        let shifted = x.map(|v| v + 5.0);
        let a = softmax(&x, 1, 0.7).unwrap();
        let b = softmax(&shifted, 1, 0.7).unwrap();
        assert!(a.max_abs_diff(&b) < 1e-12);
    }

    #[test]
    fn rejects_bad_temperature_and_axis() {
        let x = Tensor::ones(&[2, 2]);
        assert!(softmax(&x, 0, 0.0).is_err());
        assert!(softmax(&x, 0, -1.0).is_err());
        assert!(softmax(&x, 0, f64::NAN).is_err());
        assert!(softmax(&x, 2, 1.0).is_err());
    }
}
