use crate::error::{Error, Result};
use crate::pdf::batch::is_set;
use crate::pdf::prob::{expected_depth, expected_depth_backward};
use crate::pdf::{DepthBinSpec, DepthSupervisionBatch};
use crate::tensor::Tensor;

/// Huber-style residual penalty: quadratic below `beta`, linear above.
pub fn smooth_l1(x: f64, beta: f64) -> f64 {
    if x.abs() < beta {
        0.5 * x * x / beta
    } else {
        x.abs() - 0.5 * beta
    }
}

pub fn smooth_l1_grad(x: f64, beta: f64) -> f64 {
    if x.abs() < beta {
        x / beta
    } else {
        x.signum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FoundationLoss {
    /// `lambda_abs * l_abs + lambda_dense * l_dense`.
    pub l_found: f64,
    pub l_abs: f64,
    pub l_dense: f64,
    pub empty_sparse: bool,
    pub empty_dense: bool,
}

fn check_beta(op: &'static str, beta: f64) -> Result<()> {
    if beta > 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(op, format!("beta must be positive, got {beta}")))
    }
}

/// Mean SmoothL1 of `dhat - target` over the set pixels of `mask`, and the
/// number of such pixels.
fn masked_smooth_l1(dhat: &Tensor, target: &Tensor, mask: &Tensor, beta: f64) -> (f64, usize) {
    let mut total = 0.0;
    let mut count = 0;
    for ((&p, &t), &m) in dhat.data().iter().zip(target.data()).zip(mask.data()) {
        if is_set(m) {
            total += smooth_l1(p - t, beta);
            count += 1;
        }
    }
    if count == 0 {
        (0.0, 0)
    } else {
        (total / count as f64, count)
    }
}

fn masked_smooth_l1_grad(dhat: &Tensor, target: &Tensor, mask: &Tensor, beta: f64, scale: f64, out: &mut [f64]) {
    let count = mask.data().iter().filter(|&&m| is_set(m)).count();
    if count == 0 {
        return;
    }
    let s = scale / count as f64;
    for (i, ((&p, &t), &m)) in dhat.data().iter().zip(target.data()).zip(mask.data()).enumerate() {
        if is_set(m) {
            out[i] += s * smooth_l1_grad(p - t, beta);
        }
    }
}

/// Metric supervision of a decoded depth map `dhat` (`[B, H, W]`).
pub fn foundation_loss_on_depth(
    dhat: &Tensor,
    batch: &DepthSupervisionBatch,
    beta: f64,
    lambda_abs: f64,
    lambda_dense: f64,
) -> Result<FoundationLoss> {
    check_beta("foundation_loss", beta)?;
    dhat.expect_shape("foundation_loss", "dhat", batch.d_dense.shape())?;
    let (l_abs, n_abs) = masked_smooth_l1(dhat, &batch.d_sparse, &batch.mask_sparse, beta);
    let (l_dense, n_dense) = masked_smooth_l1(dhat, &batch.d_dense, &batch.mask_dense, beta);
    Ok(FoundationLoss {
        l_found: lambda_abs * l_abs + lambda_dense * l_dense,
        l_abs,
        l_dense,
        empty_sparse: n_abs == 0,
        empty_dense: n_dense == 0,
    })
}

/// Gradient of `upstream * l_found` with respect to `dhat`.
pub fn foundation_loss_on_depth_backward(
    dhat: &Tensor,
    batch: &DepthSupervisionBatch,
    beta: f64,
    lambda_abs: f64,
    lambda_dense: f64,
    upstream: f64,
) -> Result<Tensor> {
    check_beta("foundation_loss_backward", beta)?;
    dhat.expect_shape("foundation_loss_backward", "dhat", batch.d_dense.shape())?;
    let mut grad = vec![0.0; dhat.len()];
    masked_smooth_l1_grad(dhat, &batch.d_sparse, &batch.mask_sparse, beta, upstream * lambda_abs, &mut grad);
    masked_smooth_l1_grad(dhat, &batch.d_dense, &batch.mask_dense, beta, upstream * lambda_dense, &mut grad);
    Tensor::new(dhat.shape().to_vec(), grad)
}

/// Metric supervision of the expected depth decoded from `batch.prob`.
pub fn foundation_loss(
    batch: &DepthSupervisionBatch,
    bins: &DepthBinSpec,
    beta: f64,
    lambda_abs: f64,
    lambda_dense: f64,
) -> Result<FoundationLoss> {
    let dhat = expected_depth(&batch.prob, bins)?;
    foundation_loss_on_depth(&dhat, batch, beta, lambda_abs, lambda_dense)
}

/// Gradient of `l_found` with respect to `batch.prob`.
pub fn foundation_loss_backward(
    batch: &DepthSupervisionBatch,
    bins: &DepthBinSpec,
    beta: f64,
    lambda_abs: f64,
    lambda_dense: f64,
) -> Result<Tensor> {
    let dhat = expected_depth(&batch.prob, bins)?;
    let g = foundation_loss_on_depth_backward(&dhat, batch, beta, lambda_abs, lambda_dense, 1.0)?;
    expected_depth_backward(batch.prob.shape(), bins, &g)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smooth_l1_branches() {
        assert_eq!(smooth_l1(0.0, 1.0), 0.0);
        assert_eq!(smooth_l1(0.5, 1.0), 0.125);
        assert_eq!(smooth_l1(2.0, 1.0), 1.5);
        assert_eq!(smooth_l1(-2.0, 1.0), 1.5);
    }

    #[test]
    fn smooth_l1_is_c1_at_beta() {
        let beta = 0.7;
        let eps = 1e-9;
        let below = smooth_l1(beta - eps, beta);
        let above = smooth_l1(beta + eps, beta);
        assert!((above - below).abs() < 3e-9);
        assert!((smooth_l1_grad(beta - eps, beta) - smooth_l1_grad(beta + eps, beta)).abs() < 1e-8);
    }

    fn flat_batch(dhat_fill: f64, sparse_mask: f64) -> (Tensor, DepthSupervisionBatch) {
        let batch = DepthSupervisionBatch::new(
            Tensor::full(&[1, 2, 2, 2], 0.5),
            Tensor::full(&[1, 2, 2], 4.0),
            Tensor::full(&[1, 2, 2], sparse_mask),
            Tensor::full(&[1, 2, 2], 5.0),
            Tensor::ones(&[1, 2, 2]),
            None,
        )
        .unwrap();
        (Tensor::full(&[1, 2, 2], dhat_fill), batch)
    }

    #[test]
    fn composition_and_linearity() {
        let (dhat, batch) = flat_batch(4.5, 1.0);
        let a = foundation_loss_on_depth(&dhat, &batch, 1.0, 0.01, 0.03).unwrap();
        assert_eq!(a.l_abs, 0.125);
        assert_eq!(a.l_dense, 0.125);
        assert!((a.l_found - 0.04 * 0.125).abs() < 1e-15);
        let b = foundation_loss_on_depth(&dhat, &batch, 1.0, 0.01, 0.06).unwrap();
        assert!(((b.l_found - 0.01 * b.l_abs) - 2.0 * (a.l_found - 0.01 * a.l_abs)).abs() < 1e-15);
    }

    #[test]
    fn empty_sparse_mask_only_drops_that_term() {
        let (dhat, batch) = flat_batch(5.0, 0.0);
        let l = foundation_loss_on_depth(&dhat, &batch, 1.0, 0.01, 0.03).unwrap();
        assert!(l.empty_sparse && !l.empty_dense);
        assert_eq!(l.l_found, 0.0);
    }
}
