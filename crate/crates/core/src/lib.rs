#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dgtf;
pub mod error;
pub mod harness;
pub mod igdr;
pub mod ops;
pub mod params_io;
pub mod pdf;
pub mod rng;
pub mod rten;
pub mod synth;
pub mod tensor;

pub use error::{Error, Result};
pub use rng::SeededRng;
pub use tensor::{DualTensor, Tensor};
