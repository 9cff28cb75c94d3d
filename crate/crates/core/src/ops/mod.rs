//! Forward operators and their explicit backward passes.
//!
//! Every differentiable operator `f` has a companion `f_backward` that maps an
//! upstream gradient on the output to gradients on the inputs. There is no
//! tape: callers that compose operators thread intermediates themselves.

mod conv;
mod elementwise;
mod matmul;
mod pool;
mod sample;
mod shape;
mod softmax;

pub use conv::{conv2d, conv2d_backward, Conv2dGrads, Conv2dLayer};
pub use elementwise::{
    add, add_scalar, exp, exp_backward, log, log_backward, mul, mul_backward, scale, sigmoid,
    sigmoid_backward, sigmoid_scalar, softplus, softplus_backward, softplus_scalar, sub, tanh,
    tanh_backward,
};
pub use matmul::{batched_matmul, batched_matmul_backward, transpose_last2};
pub use pool::{global_avg_pool, global_avg_pool_backward};
pub use sample::{bilinear_sample, bilinear_sample_backward, bilinear_taps, SampleGrads, Tap};
pub use shape::{broadcast_channels, concat_channels, split_channels, sum_channels};
pub use softmax::{softmax, softmax_backward};
