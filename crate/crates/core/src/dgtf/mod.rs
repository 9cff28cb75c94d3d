//! Deformable gated temporal fusion.
//!
//! Each step predicts per-pixel sampling offsets and a modulation mask from
//! the current BEV feature and the previous hidden feature, aligns the hidden
//! feature with a modulated deformable convolution, and blends it with the
//! current feature through convolutional GRU gates. No ego pose is used.

mod cell;
mod deform;
mod gru;
mod params;

pub use cell::{
    dgtf_step, dgtf_step_backward, dgtf_step_traced, run_sequence, run_sequence_backward, run_sequence_traced,
    DgtfState, StepGrads, StepTrace,
};
pub use deform::{
    dcn_align, dcn_align_backward, deform_conv, deform_conv_backward, predict_offsets, predict_offsets_backward,
    DeformGrads, OffsetGrads, Offsets,
};
pub use gru::{gated_update, gated_update_backward, gated_update_traced, GateGrads, GateTrace};
pub use params::DgtfParams;
