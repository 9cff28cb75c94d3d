use crate::error::Result;
use crate::ops::{
    concat_channels, mul, sigmoid, sigmoid_backward, split_channels, tanh, tanh_backward, Conv2dGrads,
};
use crate::tensor::Tensor;

use super::DgtfParams;

/// Intermediates of one gated update, kept for the backward pass.
#[derive(Clone, Debug, PartialEq)]
pub struct GateTrace {
    pub reset: Tensor,
    pub update: Tensor,
    pub candidate: Tensor,
    pub output: Tensor,
}

/// Convolutional GRU update of the aligned history `h_aligned` with the
/// current input `x`:
///
/// ```text
/// r  = sigmoid(conv_r(x ++ h))
/// h' = tanh(conv_h(x ++ r * h))
/// z  = sigmoid(conv_z(x ++ h))
/// out = (1 - z) * x + z * h'
/// ```
pub fn gated_update(x: &Tensor, h_aligned: &Tensor, params: &DgtfParams) -> Result<Tensor> {
    Ok(gated_update_traced(x, h_aligned, params)?.output)
}

pub fn gated_update_traced(x: &Tensor, h_aligned: &Tensor, params: &DgtfParams) -> Result<GateTrace> {
    h_aligned.expect_shape("gated_update", "h_aligned", x.shape())?;
    let xh = concat_channels(x, h_aligned)?;
    let reset = sigmoid(&params.conv_r.forward(&xh)?);
    let candidate = tanh(&params.conv_h.forward(&concat_channels(x, &mul(&reset, h_aligned)?)?)?);
    let update = sigmoid(&params.conv_z.forward(&xh)?);
    let mut output = x.clone();
    for ((o, &z), &c) in output.data_mut().iter_mut().zip(update.data()).zip(candidate.data()) {
        *o = (1.0 - z) * *o + z * c;
    }
    Ok(GateTrace {
        reset,
        update,
        candidate,
        output,
    })
}

pub struct GateGrads {
    pub x: Tensor,
    pub h_aligned: Tensor,
    pub conv_r: Conv2dGrads,
    pub conv_z: Conv2dGrads,
    pub conv_h: Conv2dGrads,
}

pub fn gated_update_backward(
    x: &Tensor,
    h_aligned: &Tensor,
    params: &DgtfParams,
    trace: &GateTrace,
    grad: &Tensor,
) -> Result<GateGrads> {
    grad.expect_shape("gated_update_backward", "grad", x.shape())?;
    let c = x.shape()[1];
    let (z, cand, r) = (&trace.update, &trace.candidate, &trace.reset);

    let mut gx = grad.zip_map(z, |g, z| g * (1.0 - z))?;
    let gz = Tensor::from_fn(x.shape(), |i| grad.data()[i] * (cand.data()[i] - x.data()[i]));
    let gcand = mul(grad, z)?;

    // Candidate branch.
    let ga_h = tanh_backward(cand, &gcand)?;
    let rh = mul(r, h_aligned)?;
    let h_grads = params.conv_h.backward(&concat_channels(x, &rh)?, &ga_h)?;
    let (gx_h, grh) = split_channels(&h_grads.input, c)?;
    gx.axpy(1.0, &gx_h)?;
    let gr = mul(&grh, h_aligned)?;
    let mut gh = mul(&grh, r)?;

    // Update and reset gates share the input concat(x, h).
    let xh = concat_channels(x, h_aligned)?;
    let z_grads = params.conv_z.backward(&xh, &sigmoid_backward(z, &gz)?)?;
    let r_grads = params.conv_r.backward(&xh, &sigmoid_backward(r, &gr)?)?;
    for grads in [&z_grads, &r_grads] {
        let (a, b) = split_channels(&grads.input, c)?;
        gx.axpy(1.0, &a)?;
        gh.axpy(1.0, &b)?;
    }

    Ok(GateGrads {
        x: gx,
        h_aligned: gh,
        conv_r: r_grads,
        conv_z: z_grads,
        conv_h: h_grads,
    })
}
