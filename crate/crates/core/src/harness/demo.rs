//! Temporal alignment demo on a translating BEV feature.
//!
//! Oracle mode injects sampling offsets equal to the negated frame-to-frame
//! shift and compares the aligned history against the same convolution
//! applied to the current frame, on the noise-free frames. Trained mode learns the whole temporal cell
//! by gradient descent, backpropagating through the full sequence.

use serde::{Deserialize, Serialize};

use crate::dgtf::{dcn_align, run_sequence_backward, run_sequence_traced, DgtfParams, Offsets};
use crate::error::{Error, Result};
use crate::ops::conv2d;
use crate::rng::SeededRng;
use crate::synth::{make_moving_bev, MotionSpec};
use crate::tensor::Tensor;

use super::config::HarnessConfig;
use super::report::{timed, CheckRecord, CheckReport};

/// Oracle alignment error bound for noise-free integer shifts.
pub const ORACLE_TOL: f64 = 1e-8;
/// Trained mode passes when the final error is below this fraction of the
/// initial error.
pub const TRAINED_RATIO: f64 = 0.5;
/// Trained mode fails as divergent once the error exceeds this multiple of
/// the initial error.
pub const DIVERGENCE_RATIO: f64 = 10.0;
const KERNEL: usize = 3;
const PARAM_STREAM: u64 = 0x7465_6d70;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DemoMode {
    Oracle,
    Trained,
}

impl std::str::FromStr for DemoMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "oracle" => Ok(DemoMode::Oracle),
            "trained" => Ok(DemoMode::Trained),
            other => Err(Error::invalid("DemoMode", format!("expected `oracle` or `trained`, got `{other}`"))),
        }
    }
}

pub struct DemoOutcome {
    pub report: CheckReport,
    /// Oracle mode: error per consecutive frame pair. Trained mode: error
    /// before each step and after the last one.
    pub curve: Vec<f64>,
}

/// Rows and columns of a frame unaffected by zero fill or padding for a
/// shift of `(dy, dx)` and a `k x k` kernel.
fn interior(h: usize, w: usize, shift: (i64, i64), k: usize) -> (std::ops::Range<usize>, std::ops::Range<usize>) {
    let my = k / 2 + shift.0.unsigned_abs() as usize;
    let mx = k / 2 + shift.1.unsigned_abs() as usize;
    (my..h.saturating_sub(my).max(my), mx..w.saturating_sub(mx).max(mx))
}

/// Offsets that read every tap `shift` pixels back, with unit mask.
pub fn shift_offsets(shape: &[usize], shift: (i64, i64), params: &DgtfParams) -> Offsets {
    let (b, h, w) = (shape[0], shape[2], shape[3]);
    let taps = params.k() * params.k() * params.deformable_groups;
    let hw = h * w;
    let delta = Tensor::from_fn(&[b, 2 * taps, h, w], |i| {
        if (i / hw) % 2 == 0 {
            -shift.0 as f64
        } else {
            -shift.1 as f64
        }
    });
    Offsets {
        delta,
        mask: Tensor::ones(&[b, taps, h, w]),
    }
}

/// Max interior difference between `dcn_align(prev)` under negated-shift
/// offsets and the deformable kernel applied as a plain convolution to `cur`.
pub fn shift_alignment_error(prev: &Tensor, cur: &Tensor, shift: (i64, i64), params: &DgtfParams) -> Result<f64> {
    let (_, c, h, w) = prev.dims4("shift_alignment_error")?;
    cur.expect_shape("shift_alignment_error", "current frame", prev.shape())?;
    let k = params.k();
    let (rows, cols) = interior(h, w, shift, k);
    if rows.is_empty() || cols.is_empty() {
        return Err(Error::invalid(
            "shift_alignment_error",
            format!("{h}x{w} grid has no interior for shift {shift:?} and kernel {k}"),
        ));
    }
    let aligned = dcn_align(prev, &shift_offsets(prev.shape(), shift, params), params)?;
    let pad = k / 2;
    let reference = conv2d(cur, &params.dcn.weight, &params.dcn.bias, (pad, pad))?;
    let mut worst: f64 = 0.0;
    for n in 0..prev.shape()[0] {
        for ch in 0..c.min(params.dcn.out_channels()) {
            for y in rows.clone() {
                for x in cols.clone() {
                    let d = (aligned.at(&[n, ch, y, x]) - reference.at(&[n, ch, y, x])).abs();
                    worst = if d.is_nan() { f64::INFINITY } else { worst.max(d) };
                }
            }
        }
    }
    Ok(worst)
}

fn demo_params(spec: &MotionSpec) -> Result<DgtfParams> {
    let c = spec.base_feature.shape()[1];
    DgtfParams::init(c, KERNEL, 1, &mut SeededRng::derive(spec.seed, PARAM_STREAM))
}

fn oracle(spec: &MotionSpec, cfg: &HarnessConfig, seed: u64) -> Result<DemoOutcome> {
    let seq = make_moving_bev(spec)?;
    let mut params = demo_params(spec)?;
    // A dense kernel, so every tap of the alignment is exercised.
    params.dcn.weight = SeededRng::derive(spec.seed, PARAM_STREAM + 1).uniform_tensor(params.dcn.weight.shape(), -1.0, 1.0);
    let mut report = CheckReport::new("demo-temporal:oracle", seed, cfg.to_json());
    let mut curve = Vec::new();
    for t in 1..seq.clean.len() {
        let (err, ms) = timed(|| shift_alignment_error(&seq.clean[t - 1], &seq.clean[t], seq.shift, &params));
        let err = err?;
        curve.push(err);
        report.push(CheckRecord::at_most(format!("oracle.frame_{t}"), err, ORACLE_TOL, ms));
    }
    Ok(DemoOutcome { report, curve })
}

/// Mean squared interior error of every emitted feature against its clean
/// frame, and its gradient with respect to each emitted feature.
pub fn sequence_error(outputs: &[Tensor], clean: &[Tensor], shift: (i64, i64)) -> Result<(f64, Vec<Tensor>)> {
    let (_, c, h, w) = clean[0].dims4("sequence_error")?;
    let (rows, cols) = interior(h, w, shift, KERNEL);
    let b = clean[0].shape()[0];
    let count = (outputs.len() * b * c * rows.len() * cols.len()).max(1) as f64;
    let mut total = 0.0;
    let mut grads = Vec::with_capacity(outputs.len());
    for (out, target) in outputs.iter().zip(clean) {
        let mut g = Tensor::zeros(out.shape());
        for plane in 0..b * c {
            for y in rows.clone() {
                for x in cols.clone() {
                    let i = (plane * h + y) * w + x;
                    let d = out.data()[i] - target.data()[i];
                    total += d * d;
                    g.data_mut()[i] = 2.0 * d / count;
                }
            }
        }
        grads.push(g);
    }
    Ok((total / count, grads))
}

fn trained(spec: &MotionSpec, steps: usize, lr: f64, cfg: &HarnessConfig, seed: u64) -> Result<DemoOutcome> {
    if !(lr > 0.0) || !lr.is_finite() {
        return Err(Error::invalid("demo_temporal", format!("lr must be finite and > 0, got {lr}")));
    }
    let seq = make_moving_bev(spec)?;
    let mut params = demo_params(spec)?;
    let mut config = cfg.to_json();
    config["lr"] = serde_json::json!(lr);
    let mut report = CheckReport::new("demo-temporal:trained", seed, config);
    let (result, ms) = timed(|| -> Result<(Vec<f64>, bool)> {
        let mut curve = Vec::with_capacity(steps + 1);
        for step in 0..=steps {
            let traces = run_sequence_traced(&seq.frames, 1, &params)?;
            let outputs: Vec<Tensor> = traces.iter().map(|t| t.f_rc.clone()).collect();
            let (err, grads) = sequence_error(&outputs, &seq.clean, seq.shift)?;
            curve.push(err);
            if !err.is_finite() || err > DIVERGENCE_RATIO * curve[0] {
                return Ok((curve, true));
            }
            if step == steps {
                break;
            }
            let (g, _) = run_sequence_backward(&traces, 1, &params, &grads)?;
            params.axpy(-lr, &g)?;
        }
        Ok((curve, false))
    });
    let (curve, diverged) = result?;
    let initial = curve[0];
    let ratio = curve.last().expect("curve has the initial error") / initial;
    report.push(CheckRecord::with_status("trained.error_ratio", ratio, TRAINED_RATIO, ms, ratio < TRAINED_RATIO));
    report.push(CheckRecord::with_status(
        format!("trained.max_error_ratio(lr={lr})"),
        curve.iter().fold(0.0, |m: f64, e| m.max(e / initial)),
        DIVERGENCE_RATIO,
        0.0,
        !diverged,
    ));
    Ok(DemoOutcome { report, curve })
}

/// Runs the demo. `lr` is used in trained mode only.
pub fn demo_temporal(spec: &MotionSpec, mode: DemoMode, steps: usize, lr: f64, cfg: &HarnessConfig, seed: u64) -> Result<DemoOutcome> {
    spec.validate()?;
    match mode {
        DemoMode::Oracle => oracle(spec, cfg, seed),
        DemoMode::Trained => trained(spec, steps, lr, cfg, seed),
    }
}
