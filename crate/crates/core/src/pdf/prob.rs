use crate::error::{Error, Result};
use crate::pdf::batch::is_set;
use crate::pdf::{DepthBinSpec, DepthSupervisionBatch};
use crate::tensor::Tensor;

/// Lower bound on unnormalised Gaussian target mass.
pub const TARGET_FLOOR: f64 = 1e-12;
/// Predicted probabilities are clamped to this inside the KL only.
pub const PROB_FLOOR: f64 = 1e-12;

/// A mask-averaged loss. `empty` marks a batch whose mask selected nothing,
/// in which case `value` is zero.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MaskedLoss {
    pub value: f64,
    pub empty: bool,
}

/// Discretised Gaussian around `depth` over the bin centres, summing to one.
pub fn gaussian_target(depth: f64, bins: &DepthBinSpec, sigma: f64) -> Result<Tensor> {
    if !bins.contains(depth) {
        return Err(Error::invalid(
            "gaussian_target",
            format!("depth {depth} outside [{}, {}]", bins.d_min(), bins.d_max()),
        ));
    }
    if !(sigma > 0.0) {
        return Err(Error::invalid("gaussian_target", format!("sigma must be positive, got {sigma}")));
    }
    let mut g: Vec<f64> = bins
        .centers()
        .iter()
        .map(|&c| (-(c - depth).powi(2) / (2.0 * sigma * sigma)).exp().max(TARGET_FLOOR))
        .collect();
    let total: f64 = g.iter().sum();
    g.iter_mut().for_each(|v| *v /= total);
    Tensor::new(vec![bins.count()], g)
}

fn check_bins(op: &'static str, prob: &Tensor, bins: &DepthBinSpec) -> Result<(usize, usize, usize, usize)> {
    let (b, d, h, w) = prob.dims4(op)?;
    if d != bins.count() {
        return Err(Error::shape(op, "bins (axis 1)", bins.count(), d));
    }
    Ok((b, d, h, w))
}

/// Visits every sparse-masked pixel with its Gaussian target.
fn for_each_sparse(
    batch: &DepthSupervisionBatch,
    bins: &DepthBinSpec,
    sigma: f64,
    mut f: impl FnMut(usize, usize, &[f64]),
) -> Result<usize> {
    let (b, h, w) = batch.dims();
    let mut count = 0;
    for n in 0..b {
        for px in 0..h * w {
            let i = n * h * w + px;
            if !is_set(batch.mask_sparse.data()[i]) {
                continue;
            }
            let g = gaussian_target(batch.d_sparse.data()[i], bins, sigma)?;
            f(n, px, g.data());
            count += 1;
        }
    }
    Ok(count)
}

/// Mean over sparse pixels of `KL(G(d_sparse) || P)`.
pub fn kl_prob_loss(batch: &DepthSupervisionBatch, bins: &DepthBinSpec, sigma: f64) -> Result<MaskedLoss> {
    let (_, d, h, w) = check_bins("kl_prob_loss", &batch.prob, bins)?;
    let p = batch.prob.data();
    let mut total = 0.0;
    let count = for_each_sparse(batch, bins, sigma, |n, px, g| {
        for (k, &gk) in g.iter().enumerate() {
            let pk = p[(n * d + k) * h * w + px].max(PROB_FLOOR);
            total += gk * (gk / pk).ln();
        }
    })?;
    Ok(if count == 0 {
        MaskedLoss { value: 0.0, empty: true }
    } else {
        MaskedLoss {
            value: total / count as f64,
            empty: false,
        }
    })
}

/// Gradient of `upstream * kl_prob_loss` with respect to `batch.prob`.
pub fn kl_prob_loss_backward(
    batch: &DepthSupervisionBatch,
    bins: &DepthBinSpec,
    sigma: f64,
    upstream: f64,
) -> Result<Tensor> {
    let (_, d, h, w) = check_bins("kl_prob_loss_backward", &batch.prob, bins)?;
    let p = batch.prob.data();
    let mut grad = vec![0.0; p.len()];
    let count = for_each_sparse(batch, bins, sigma, |n, px, g| {
        for (k, &gk) in g.iter().enumerate() {
            let i = (n * d + k) * h * w + px;
            if p[i] > PROB_FLOOR {
                grad[i] -= gk / p[i];
            }
        }
    })?;
    if count > 0 {
        let s = upstream / count as f64;
        grad.iter_mut().for_each(|v| *v *= s);
    }
    Tensor::new(batch.prob.shape().to_vec(), grad)
}

/// `sum_k P_k * center_k` at each pixel: `[B, D, H, W] -> [B, H, W]`.
pub fn expected_depth(prob: &Tensor, bins: &DepthBinSpec) -> Result<Tensor> {
    let (b, d, h, w) = check_bins("expected_depth", prob, bins)?;
    let p = prob.data();
    let mut out = vec![0.0; b * h * w];
    for n in 0..b {
        for (k, &c) in bins.centers().iter().enumerate() {
            let plane = &p[(n * d + k) * h * w..][..h * w];
            for (o, &v) in out[n * h * w..][..h * w].iter_mut().zip(plane) {
                *o += v * c;
            }
        }
    }
    Tensor::new(vec![b, h, w], out)
}

pub fn expected_depth_backward(prob_shape: &[usize], bins: &DepthBinSpec, grad: &Tensor) -> Result<Tensor> {
    let probe = Tensor::zeros(prob_shape);
    let (b, d, h, w) = check_bins("expected_depth_backward", &probe, bins)?;
    grad.expect_shape("expected_depth_backward", "grad", &[b, h, w])?;
    let g = grad.data();
    let mut out = vec![0.0; probe.len()];
    for n in 0..b {
        for (k, &c) in bins.centers().iter().enumerate() {
            let plane = &mut out[(n * d + k) * h * w..][..h * w];
            for (o, &gv) in plane.iter_mut().zip(&g[n * h * w..][..h * w]) {
                *o = gv * c;
            }
        }
    }
    Tensor::new(prob_shape.to_vec(), out)
}
