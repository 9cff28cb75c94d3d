use crate::error::{Error, Result};
use crate::ops::{
    batched_matmul, batched_matmul_backward, broadcast_channels, global_avg_pool, global_avg_pool_backward, sigmoid,
    sigmoid_backward, softmax, softmax_backward, sum_channels, transpose_last2, Conv2dGrads,
};
use crate::tensor::Tensor;

use super::IgdrParams;

/// Spatial mean of each RoI feature, projected, then replicated over `batch`:
/// `[N, C_inst, H', W'] -> [batch, N, C_inst]`.
pub fn pool_project(e_features: &Tensor, params: &IgdrParams, batch: usize) -> Result<Tensor> {
    let pooled = global_avg_pool(e_features)?;
    let projected = project(&pooled, params)?;
    Ok(replicate(&projected, batch))
}

fn project(pooled: &Tensor, params: &IgdrParams) -> Result<Tensor> {
    let (n, ci) = (pooled.shape()[0], pooled.shape()[1]);
    if ci != params.inst_channels() {
        return Err(Error::shape("pool_project", "instance channels (axis 1)", params.inst_channels(), ci));
    }
    let (x, wt, bias) = (pooled.data(), params.proj_weight.data(), params.proj_bias.data());
    Tensor::new(
        vec![n, ci],
        (0..n * ci)
            .map(|i| {
                let (k, o) = (i / ci, i % ci);
                bias[o] + (0..ci).map(|c| wt[o * ci + c] * x[k * ci + c]).sum::<f64>()
            })
            .collect(),
    )
}

fn replicate(t: &Tensor, batch: usize) -> Tensor {
    let mut shape = vec![batch];
    shape.extend_from_slice(t.shape());
    let data = (0..batch).flat_map(|_| t.data().iter().copied()).collect();
    Tensor::new(shape, data).expect("replicated shape")
}

pub struct PoolProjectGrads {
    pub e_features: Tensor,
    pub proj_weight: Tensor,
    pub proj_bias: Tensor,
}

pub fn pool_project_backward(e_features: &Tensor, params: &IgdrParams, grad: &Tensor) -> Result<PoolProjectGrads> {
    let pooled = global_avg_pool(e_features)?;
    let (n, ci) = (pooled.shape()[0], pooled.shape()[1]);
    let batch = grad.shape().first().copied().unwrap_or(0);
    grad.expect_shape("pool_project_backward", "grad", &[batch, n, ci])?;
    let mut g = vec![0.0; n * ci];
    for chunk in grad.data().chunks_exact(n * ci) {
        for (a, &v) in g.iter_mut().zip(chunk) {
            *a += v;
        }
    }
    let (x, wt) = (pooled.data(), params.proj_weight.data());
    let mut gw = vec![0.0; ci * ci];
    let mut gb = vec![0.0; ci];
    let mut gx = vec![0.0; n * ci];
    for k in 0..n {
        for o in 0..ci {
            let go = g[k * ci + o];
            gb[o] += go;
            for c in 0..ci {
                gw[o * ci + c] += go * x[k * ci + c];
                gx[k * ci + c] += go * wt[o * ci + c];
            }
        }
    }
    Ok(PoolProjectGrads {
        e_features: global_avg_pool_backward(e_features.shape(), &Tensor::new(vec![n, ci], gx)?)?,
        proj_weight: Tensor::new(vec![ci, ci], gw)?,
        proj_bias: Tensor::new(vec![ci], gb)?,
    })
}

/// Per-pixel softmax of `S_BEV / temperature` across the instance axis.
pub fn softmax_assign(s_bev: &Tensor, temperature: f64) -> Result<Tensor> {
    s_bev.dims4("softmax_assign")?;
    softmax(s_bev, 1, temperature)
}

pub fn softmax_assign_backward(a_prob: &Tensor, grad: &Tensor, temperature: f64) -> Result<Tensor> {
    softmax_backward(a_prob, grad, 1, temperature)
}

fn flatten_pixels(t: &Tensor) -> Result<Tensor> {
    let (b, n, h, w) = t.dims4("broadcast_prototypes")?;
    t.reshape(&[b, n, h * w])
}

/// `E_BEV[b, :, p] = sum_n A_prob[b, n, p] * E_proj[b, n, :]`.
pub fn broadcast_prototypes(a_prob: &Tensor, e_proj: &Tensor) -> Result<Tensor> {
    let (b, _, h, w) = a_prob.dims4("broadcast_prototypes")?;
    let et = transpose_last2(e_proj)?;
    let out = batched_matmul(&et, &flatten_pixels(a_prob)?)?;
    let ci = out.shape()[1];
    out.reshape(&[b, ci, h, w])
}

/// Returns gradients for `(A_prob, E_proj)`.
pub fn broadcast_prototypes_backward(a_prob: &Tensor, e_proj: &Tensor, grad: &Tensor) -> Result<(Tensor, Tensor)> {
    let (b, ci, h, w) = grad.dims4("broadcast_prototypes_backward")?;
    let et = transpose_last2(e_proj)?;
    let (g_et, g_a) = batched_matmul_backward(&et, &flatten_pixels(a_prob)?, &grad.reshape(&[b, ci, h * w])?)?;
    Ok((g_a.reshape(a_prob.shape())?, transpose_last2(&g_et)?))
}

/// Scale and shift maps from the broadcast prototypes; no activation.
pub fn gen_affine(e_bev: &Tensor, params: &IgdrParams) -> Result<(Tensor, Tensor)> {
    Ok((params.conv_gamma.forward(e_bev)?, params.conv_beta.forward(e_bev)?))
}

pub struct AffineGrads {
    pub e_bev: Tensor,
    pub conv_gamma: Conv2dGrads,
    pub conv_beta: Conv2dGrads,
}

pub fn gen_affine_backward(
    e_bev: &Tensor,
    params: &IgdrParams,
    grad_gamma: &Tensor,
    grad_beta: &Tensor,
) -> Result<AffineGrads> {
    let conv_gamma = params.conv_gamma.backward(e_bev, grad_gamma)?;
    let conv_beta = params.conv_beta.backward(e_bev, grad_beta)?;
    let mut g = conv_gamma.input.clone();
    g.axpy(1.0, &conv_beta.input)?;
    Ok(AffineGrads {
        e_bev: g,
        conv_gamma,
        conv_beta,
    })
}

/// `F * gamma + beta`.
pub fn calibrate(f_rc: &Tensor, gamma: &Tensor, beta: &Tensor) -> Result<Tensor> {
    gamma.expect_shape("calibrate", "gamma", f_rc.shape())?;
    beta.expect_shape("calibrate", "beta", f_rc.shape())?;
    Ok(Tensor::from_fn(f_rc.shape(), |i| {
        f_rc.data()[i] * gamma.data()[i] + beta.data()[i]
    }))
}

/// Returns gradients for `(F_RC, gamma, beta)`.
pub fn calibrate_backward(f_rc: &Tensor, gamma: &Tensor, grad: &Tensor) -> Result<(Tensor, Tensor, Tensor)> {
    grad.expect_shape("calibrate_backward", "grad", f_rc.shape())?;
    Ok((grad.zip_map(gamma, |g, s| g * s)?, grad.zip_map(f_rc, |g, f| g * f)?, grad.clone()))
}

/// `sigmoid(conv_gate(sum_n S_BEV))`, `[B, 1, Hb, Wb]`.
pub fn foreground_gate(s_bev: &Tensor, params: &IgdrParams) -> Result<Tensor> {
    Ok(sigmoid(&params.conv_gate.forward(&sum_channels(s_bev)?)?))
}

pub fn foreground_gate_backward(
    s_bev: &Tensor,
    params: &IgdrParams,
    gate: &Tensor,
    grad: &Tensor,
) -> Result<(Tensor, Conv2dGrads)> {
    let g_logit = sigmoid_backward(gate, grad)?;
    let conv = params.conv_gate.backward(&sum_channels(s_bev)?, &g_logit)?;
    Ok((broadcast_channels(&conv.input, s_bev.shape()[1])?, conv))
}

fn gate_dims(f_rc: &Tensor, gate: &Tensor) -> Result<(usize, usize, usize)> {
    let (b, c, h, w) = f_rc.dims4("gated_fuse")?;
    gate.expect_shape("gated_fuse", "gate", &[b, 1, h, w])?;
    Ok((b, c, h * w))
}

/// `(1 - G) * F_RC + G * F_calibrated`, with `G` shared across channels.
pub fn gated_fuse(f_rc: &Tensor, f_calibrated: &Tensor, gate: &Tensor) -> Result<Tensor> {
    f_calibrated.expect_shape("gated_fuse", "F_calibrated", f_rc.shape())?;
    let (_, c, hw) = gate_dims(f_rc, gate)?;
    Ok(Tensor::from_fn(f_rc.shape(), |i| {
        let g = gate.data()[(i / (c * hw)) * hw + i % hw];
        (1.0 - g) * f_rc.data()[i] + g * f_calibrated.data()[i]
    }))
}

/// Returns gradients for `(F_RC, F_calibrated, G)`.
pub fn gated_fuse_backward(
    f_rc: &Tensor,
    f_calibrated: &Tensor,
    gate: &Tensor,
    grad: &Tensor,
) -> Result<(Tensor, Tensor, Tensor)> {
    grad.expect_shape("gated_fuse_backward", "grad", f_rc.shape())?;
    let (_, c, hw) = gate_dims(f_rc, gate)?;
    let gi = |i: usize| (i / (c * hw)) * hw + i % hw;
    let g_f = Tensor::from_fn(f_rc.shape(), |i| grad.data()[i] * (1.0 - gate.data()[gi(i)]));
    let g_cal = Tensor::from_fn(f_rc.shape(), |i| grad.data()[i] * gate.data()[gi(i)]);
    let mut g_gate = Tensor::zeros(gate.shape());
    for i in 0..f_rc.len() {
        g_gate.data_mut()[gi(i)] += grad.data()[i] * (f_calibrated.data()[i] - f_rc.data()[i]);
    }
    Ok((g_f, g_cal, g_gate))
}
