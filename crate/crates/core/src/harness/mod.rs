//! Verification harness: finite-difference gradient checks, property
//! suites, golden-file regression and the temporal alignment demo.

mod config;
mod demo;
pub mod fixtures;
mod golden;
mod gradcheck;
mod props;
mod registry;
mod report;

pub use config::{seed_from_env, FiniteDiffConfig, HarnessConfig, DEFAULT_SEED, SEED_ENV};
pub use gradcheck::{check_problem, gradcheck, probe_indices, relative_error, run_target, GradProblem, TensorCheck};
pub use registry::{target_names, targets, Target};
pub use report::{timed, CheckRecord, CheckReport, ReportFormat, Status};
pub use demo::{
    demo_temporal, sequence_error, shift_alignment_error, shift_offsets, DemoMode, DemoOutcome, DIVERGENCE_RATIO,
    ORACLE_TOL, TRAINED_RATIO,
};
pub use props::{conv2d_reference, dump_trial, properties, run_property, run_props, Property, Trial, SUITES};
pub use golden::{f32_rel_error, golden_case, golden_generate, golden_verify, GoldenManifest, CASES, F32_REL_TOL, MANIFEST};
