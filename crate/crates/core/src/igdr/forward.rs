use std::path::Path;

use crate::error::{Error, Result};
use crate::rten::{self, Dtype};
use crate::tensor::Tensor;

use super::ops::*;
use super::IgdrParams;

pub const DEFAULT_TEMPERATURE: f64 = 1.0;

/// Instance evidence: RoI features `[N, C_inst, H', W']` and BEV scores
/// `[B, N, Hb, Wb]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Instances {
    pub e_features: Tensor,
    pub s_bev: Tensor,
}

#[derive(Clone, Debug, PartialEq)]
pub struct IgdrInputs {
    pub f_rc: Tensor,
    /// `None` when there are no proposals.
    pub instances: Option<Instances>,
    pub temperature: f64,
}

impl IgdrInputs {
    pub fn new(f_rc: Tensor, e_features: Tensor, s_bev: Tensor, temperature: f64) -> Result<Self> {
        let inputs = IgdrInputs {
            f_rc,
            instances: Some(Instances { e_features, s_bev }),
            temperature,
        };
        inputs.validate()?;
        Ok(inputs)
    }

    pub fn without_instances(f_rc: Tensor, temperature: f64) -> Self {
        IgdrInputs {
            f_rc,
            instances: None,
            temperature,
        }
    }

    pub fn instance_count(&self) -> usize {
        self.instances.as_ref().map_or(0, |i| i.e_features.shape()[0])
    }

    pub fn validate(&self) -> Result<()> {
        const OP: &str = "IgdrInputs";
        let (b, _, h, w) = self.f_rc.dims4(OP)?;
        if !(self.temperature > 0.0) {
            return Err(Error::invalid(OP, format!("temperature must be > 0, got {}", self.temperature)));
        }
        if let Some(inst) = &self.instances {
            let (n, _, _, _) = inst.e_features.dims4(OP)?;
            inst.s_bev.expect_shape(OP, "S_BEV", &[b, n, h, w])?;
            if inst.s_bev.data().iter().any(|&v| v < 0.0) {
                return Err(Error::invalid(OP, "S_BEV scores must be nonnegative"));
            }
            if !inst.e_features.all_finite() || !inst.s_bev.all_finite() {
                return Err(Error::invalid(OP, "instance inputs contain non-finite values"));
            }
        }
        if !self.f_rc.all_finite() {
            return Err(Error::invalid(OP, "F_RC contains non-finite values"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Intermediates {
    pub e_proj: Tensor,
    pub a_prob: Tensor,
    pub e_bev: Tensor,
    pub gamma: Tensor,
    pub beta: Tensor,
    pub f_calibrated: Tensor,
    pub g_bg: Tensor,
}

#[derive(Clone, Debug, PartialEq)]
pub struct IgdrOutput {
    pub f_final: Tensor,
    /// `None` exactly when the input had no instances.
    pub intermediates: Option<Intermediates>,
}

impl IgdrOutput {
    pub fn passthrough(&self) -> bool {
        self.intermediates.is_none()
    }

    /// Writes `f_final` and every intermediate as `<name>.rten` under `dir`.
    pub fn dump(&self, dir: &Path, dtype: Dtype) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (name, t) in self.named() {
            rten::write(dir.join(format!("{name}.rten")), t, dtype)?;
        }
        Ok(())
    }

    pub fn named(&self) -> Vec<(&'static str, &Tensor)> {
        let mut out = vec![("f_final", &self.f_final)];
        if let Some(m) = &self.intermediates {
            out.extend([
                ("e_proj", &m.e_proj),
                ("a_prob", &m.a_prob),
                ("e_bev", &m.e_bev),
                ("gamma", &m.gamma),
                ("beta", &m.beta),
                ("f_calibrated", &m.f_calibrated),
                ("g_bg", &m.g_bg),
            ]);
        }
        out
    }
}

/// Prototype broadcast, affine calibration and foreground-gated fusion.
pub fn igdr_forward(inputs: &IgdrInputs, params: &IgdrParams) -> Result<IgdrOutput> {
    inputs.validate()?;
    params.validate()?;
    let f_rc = &inputs.f_rc;
    if f_rc.shape()[1] != params.channels() {
        return Err(Error::shape("igdr_forward", "F_RC channels (axis 1)", params.channels(), f_rc.shape()[1]));
    }
    let Some(inst) = &inputs.instances else {
        return Ok(IgdrOutput {
            f_final: f_rc.clone(),
            intermediates: None,
        });
    };
    let e_proj = pool_project(&inst.e_features, params, f_rc.shape()[0])?;
    let a_prob = softmax_assign(&inst.s_bev, inputs.temperature)?;
    let e_bev = broadcast_prototypes(&a_prob, &e_proj)?;
    let (gamma, beta) = gen_affine(&e_bev, params)?;
    let f_calibrated = calibrate(f_rc, &gamma, &beta)?;
    let g_bg = foreground_gate(&inst.s_bev, params)?;
    let f_final = gated_fuse(f_rc, &f_calibrated, &g_bg)?;
    Ok(IgdrOutput {
        f_final,
        intermediates: Some(Intermediates {
            e_proj,
            a_prob,
            e_bev,
            gamma,
            beta,
            f_calibrated,
            g_bg,
        }),
    })
}

pub struct IgdrGrads {
    pub f_rc: Tensor,
    /// Gradients on `(E_features, S_BEV)` when instances were present.
    pub instances: Option<Instances>,
    pub params: IgdrParams,
}

pub fn igdr_backward(
    inputs: &IgdrInputs,
    params: &IgdrParams,
    output: &IgdrOutput,
    grad_final: &Tensor,
) -> Result<IgdrGrads> {
    grad_final.expect_shape("igdr_backward", "grad", inputs.f_rc.shape())?;
    let mut g = params.zeros_like();
    let (Some(inst), Some(m)) = (&inputs.instances, &output.intermediates) else {
        return Ok(IgdrGrads {
            f_rc: grad_final.clone(),
            instances: None,
            params: g,
        });
    };
    let (mut g_f, g_cal, g_gate) = gated_fuse_backward(&inputs.f_rc, &m.f_calibrated, &m.g_bg, grad_final)?;

    let (g_s_gate, gate_conv) = foreground_gate_backward(&inst.s_bev, params, &m.g_bg, &g_gate)?;
    g.conv_gate.accumulate(&gate_conv)?;

    let (g_f_cal, g_gamma, g_beta) = calibrate_backward(&inputs.f_rc, &m.gamma, &g_cal)?;
    g_f.axpy(1.0, &g_f_cal)?;

    let affine = gen_affine_backward(&m.e_bev, params, &g_gamma, &g_beta)?;
    g.conv_gamma.accumulate(&affine.conv_gamma)?;
    g.conv_beta.accumulate(&affine.conv_beta)?;

    let (g_a, g_e_proj) = broadcast_prototypes_backward(&m.a_prob, &m.e_proj, &affine.e_bev)?;
    let mut g_s = softmax_assign_backward(&m.a_prob, &g_a, inputs.temperature)?;
    g_s.axpy(1.0, &g_s_gate)?;

    let pooled = pool_project_backward(&inst.e_features, params, &g_e_proj)?;
    g.proj_weight = pooled.proj_weight;
    g.proj_bias = pooled.proj_bias;

    Ok(IgdrGrads {
        f_rc: g_f,
        instances: Some(Instances {
            e_features: pooled.e_features,
            s_bev: g_s,
        }),
        params: g,
    })
}
