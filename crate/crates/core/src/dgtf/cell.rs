use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::deform::{dcn_align, dcn_align_backward, predict_offsets, predict_offsets_backward, Offsets};
use super::gru::{gated_update_backward, gated_update_traced, GateTrace};
use super::DgtfParams;

/// Recurrent hidden feature carried between frames. Starts uninitialised;
/// the first step then uses its own input as history.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DgtfState {
    hidden: Option<Tensor>,
}

impl DgtfState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_hidden(hidden: Tensor) -> Self {
        DgtfState { hidden: Some(hidden) }
    }

    pub fn initialized(&self) -> bool {
        self.hidden.is_some()
    }

    pub fn hidden(&self) -> Option<&Tensor> {
        self.hidden.as_ref()
    }
}

/// Every intermediate of one [`dgtf_step`].
#[derive(Clone, Debug, PartialEq)]
pub struct StepTrace {
    pub x: Tensor,
    pub h_prev: Tensor,
    /// `h_prev` is a copy of `x` because the state was uninitialised.
    pub bootstrap: bool,
    pub offsets: Offsets,
    pub aligned: Tensor,
    pub gates: GateTrace,
    pub f_rc: Tensor,
}

impl StepTrace {
    pub fn hidden(&self) -> &Tensor {
        &self.gates.output
    }
}

pub fn dgtf_step_traced(x: &Tensor, state: &DgtfState, params: &DgtfParams) -> Result<StepTrace> {
    x.dims4("dgtf_step")?;
    if x.shape()[1] != params.channels() {
        return Err(Error::shape("dgtf_step", "channels (axis 1)", params.channels(), x.shape()[1]));
    }
    let (h_prev, bootstrap) = match &state.hidden {
        Some(h) => {
            h.expect_shape("dgtf_step", "hidden state (shape drift between steps)", x.shape())?;
            (h.clone(), false)
        }
        None => (x.clone(), true),
    };
    let offsets = predict_offsets(x, &h_prev, params)?;
    let aligned = dcn_align(&h_prev, &offsets, params)?;
    let gates = gated_update_traced(x, &aligned, params)?;
    let f_rc = params.conv_out.forward(&gates.output)?;
    Ok(StepTrace {
        x: x.clone(),
        h_prev,
        bootstrap,
        offsets,
        aligned,
        gates,
        f_rc,
    })
}

/// One frame of temporal fusion. Returns the emitted feature and the new
/// state, which carries the hidden feature before the output convolution.
pub fn dgtf_step(x: &Tensor, state: &DgtfState, params: &DgtfParams) -> Result<(Tensor, DgtfState)> {
    let trace = dgtf_step_traced(x, state, params)?;
    let state = DgtfState::with_hidden(trace.gates.output);
    Ok((trace.f_rc, state))
}

pub struct StepGrads {
    /// Includes the history path when the step bootstrapped from `x`.
    pub x: Tensor,
    /// Zero when the step bootstrapped.
    pub h_prev: Tensor,
    pub params: DgtfParams,
}

/// Backward of one step for upstream gradients on the emitted feature and,
/// optionally, on the carried hidden state.
pub fn dgtf_step_backward(
    trace: &StepTrace,
    params: &DgtfParams,
    grad_f_rc: &Tensor,
    grad_hidden: Option<&Tensor>,
) -> Result<StepGrads> {
    let mut g = params.zeros_like();
    let out_grads = params.conv_out.backward(trace.hidden(), grad_f_rc)?;
    g.conv_out.accumulate(&out_grads)?;
    let mut g_hidden = out_grads.input;
    if let Some(extra) = grad_hidden {
        g_hidden.axpy(1.0, extra)?;
    }

    let gate = gated_update_backward(&trace.x, &trace.aligned, params, &trace.gates, &g_hidden)?;
    g.conv_r.accumulate(&gate.conv_r)?;
    g.conv_z.accumulate(&gate.conv_z)?;
    g.conv_h.accumulate(&gate.conv_h)?;

    let deform = dcn_align_backward(&trace.h_prev, &trace.offsets, params, &gate.h_aligned)?;
    g.dcn.weight.axpy(1.0, &deform.weight)?;
    g.dcn.bias.axpy(1.0, &deform.bias)?;

    let off = predict_offsets_backward(&trace.x, &trace.h_prev, params, &trace.offsets, &deform.delta, &deform.mask)?;
    g.conv_offset.accumulate(&off.conv_offset)?;

    let mut gx = gate.x;
    gx.axpy(1.0, &off.x)?;
    let mut gh = deform.h_prev;
    gh.axpy(1.0, &off.h_prev)?;
    if trace.bootstrap {
        gx.axpy(1.0, &gh)?;
        gh.data_mut().fill(0.0);
    }
    Ok(StepGrads {
        x: gx,
        h_prev: gh,
        params: g,
    })
}

fn check_gap(gap: usize) -> Result<()> {
    if (1..=3).contains(&gap) {
        Ok(())
    } else {
        Err(Error::invalid("run_sequence", format!("frame gap must be 1, 2 or 3, got {gap}")))
    }
}

/// Runs the cell over `frames`. Frame `t` fuses with the state produced at
/// `t - gap`, so `gap` interleaved recurrences run side by side; each one
/// bootstraps on its first frame.
pub fn run_sequence(frames: &[Tensor], gap: usize, params: &DgtfParams) -> Result<Vec<Tensor>> {
    Ok(run_sequence_traced(frames, gap, params)?
        .into_iter()
        .map(|t| t.f_rc)
        .collect())
}

pub fn run_sequence_traced(frames: &[Tensor], gap: usize, params: &DgtfParams) -> Result<Vec<StepTrace>> {
    check_gap(gap)?;
    let mut traces: Vec<StepTrace> = Vec::with_capacity(frames.len());
    for (t, x) in frames.iter().enumerate() {
        let state = if t >= gap {
            DgtfState::with_hidden(traces[t - gap].hidden().clone())
        } else {
            DgtfState::new()
        };
        traces.push(dgtf_step_traced(x, &state, params)?);
    }
    Ok(traces)
}

/// Backpropagation through a traced sequence. Returns parameter gradients and
/// one gradient per input frame.
pub fn run_sequence_backward(
    traces: &[StepTrace],
    gap: usize,
    params: &DgtfParams,
    grad_outputs: &[Tensor],
) -> Result<(DgtfParams, Vec<Tensor>)> {
    check_gap(gap)?;
    if grad_outputs.len() != traces.len() {
        return Err(Error::shape("run_sequence_backward", "output gradients", traces.len(), grad_outputs.len()));
    }
    let mut g_params = params.zeros_like();
    let mut carry: Vec<Option<Tensor>> = vec![None; traces.len()];
    let mut g_frames = vec![Tensor::zeros(&[1]); traces.len()];
    for t in (0..traces.len()).rev() {
        let step = dgtf_step_backward(&traces[t], params, &grad_outputs[t], carry[t].as_ref())?;
        g_params.axpy(1.0, &step.params)?;
        if !traces[t].bootstrap {
            match &mut carry[t - gap] {
                Some(c) => c.axpy(1.0, &step.h_prev)?,
                slot => *slot = Some(step.h_prev),
            }
        }
        g_frames[t] = step.x;
    }
    Ok((g_params, g_frames))
}
