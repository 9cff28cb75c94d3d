//! Ordinal depth-ranking supervision with boundary-focused pair sampling.
//!
//! Pairs come from two pools. Edge pairs take one pixel from the thin ring
//! just outside an instance mask and one from inside it. Global pairs take
//! both pixels from the background (dense-supervised pixels outside every
//! instance). A pair is kept only when its dense depth gap exceeds a
//! depth-dependent tolerance, so flat surfaces contribute nothing.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ops::{sigmoid_scalar, softplus_scalar};
use crate::pdf::batch::is_set;
use crate::pdf::DepthSupervisionBatch;
use crate::rng::SeededRng;
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RankingConfig {
    /// Metres.
    pub tau_abs: f64,
    pub tau_rel: f64,
    pub w_edge: f64,
    pub w_global: f64,
    pub n_edge_pairs: usize,
    pub n_global_pairs: usize,
    /// Pixels.
    pub dilation_radius: usize,
    pub rng_seed: u64,
}

impl Default for RankingConfig {
    fn default() -> Self {
        RankingConfig {
            tau_abs: 0.5,
            tau_rel: 0.03,
            w_edge: 0.6,
            w_global: 0.4,
            n_edge_pairs: 512,
            n_global_pairs: 512,
            dilation_radius: 2,
            rng_seed: 42,
        }
    }
}

impl RankingConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |reason: String| Err(Error::invalid("RankingConfig", reason));
        if !(self.tau_abs > 0.0) {
            return bad(format!("tau_abs must be positive, got {}", self.tau_abs));
        }
        if !(0.0..1.0).contains(&self.tau_rel) {
            return bad(format!("tau_rel must lie in [0, 1), got {}", self.tau_rel));
        }
        if self.w_edge < 0.0 || self.w_global < 0.0 || !(self.w_edge + self.w_global > 0.0) {
            return bad(format!(
                "weights must be non-negative with a positive sum, got ({}, {})",
                self.w_edge, self.w_global
            ));
        }
        if self.dilation_radius < 1 {
            return bad("dilation_radius must be at least 1".into());
        }
        Ok(())
    }
}

/// Pair tolerance `max(tau_abs, tau_rel * mean depth)` and whether the gap
/// between the two depths exceeds it.
pub fn dynamic_threshold(d_i: f64, d_j: f64, cfg: &RankingConfig) -> (f64, bool) {
    let tau = cfg.tau_abs.max(cfg.tau_rel * (d_i + d_j) / 2.0);
    (tau, (d_i - d_j).abs() > tau)
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// `softplus(-s * (dhat_i - dhat_j))` with `s = sign(d_gi - d_gj)`.
pub fn pair_rank_loss(dhat_i: f64, dhat_j: f64, d_gi: f64, d_gj: f64) -> f64 {
    softplus_scalar(-sign(d_gi - d_gj) * (dhat_i - dhat_j))
}

/// Partial derivatives of [`pair_rank_loss`] in `(dhat_i, dhat_j)`.
pub fn pair_rank_loss_grad(dhat_i: f64, dhat_j: f64, d_gi: f64, d_gj: f64) -> (f64, f64) {
    let s = sign(d_gi - d_gj);
    let g = -s * sigmoid_scalar(-s * (dhat_i - dhat_j));
    (g, -g)
}

/// Square-element dilation of a binary `[H, W]` mask minus the mask itself.
pub fn dilated_ring(mask: &Tensor, radius: usize) -> Result<Tensor> {
    let (h, w) = match *mask.shape() {
        [h, w] => (h, w),
        _ => return Err(Error::shape("dilated_ring", "rank", 2, mask.rank())),
    };
    let m = mask.data();
    // Separable max filter: rows, then columns.
    let mut horiz = vec![false; h * w];
    for y in 0..h {
        for x in 0..w {
            let lo = x.saturating_sub(radius);
            let hi = (x + radius).min(w - 1);
            horiz[y * w + x] = (lo..=hi).any(|xx| is_set(m[y * w + xx]));
        }
    }
    let mut ring = vec![0.0; h * w];
    for y in 0..h {
        let lo = y.saturating_sub(radius);
        let hi = (y + radius).min(h - 1);
        for x in 0..w {
            let dilated = (lo..=hi).any(|yy| horiz[yy * w + x]);
            if dilated && !is_set(m[y * w + x]) {
                ring[y * w + x] = 1.0;
            }
        }
    }
    Tensor::new(vec![h, w], ring)
}

/// A pixel of a `[B, H, W]` map.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Pixel {
    pub batch: usize,
    pub y: usize,
    pub x: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PixelPair {
    pub i: Pixel,
    pub j: Pixel,
}

fn flat(p: Pixel, h: usize, w: usize) -> usize {
    (p.batch * h + p.y) * w + p.x
}

fn pixel_at(batch: usize, index: usize, w: usize) -> Pixel {
    Pixel {
        batch,
        y: index / w,
        x: index % w,
    }
}

fn accept(batch: &DepthSupervisionBatch, pair: PixelPair, cfg: &RankingConfig) -> bool {
    let (_, h, w) = batch.dims();
    let d = batch.d_dense.data();
    dynamic_threshold(d[flat(pair.i, h, w)], d[flat(pair.j, h, w)], cfg).1
}

/// Draws up to `target` pairs with `draw`, keeping those that pass the
/// threshold; gives up after `20 * target` attempts.
fn rejection_sample(
    batch: &DepthSupervisionBatch,
    cfg: &RankingConfig,
    target: usize,
    rng: &mut SeededRng,
    mut draw: impl FnMut(&mut SeededRng) -> PixelPair,
) -> Vec<PixelPair> {
    let mut kept = Vec::with_capacity(target);
    let mut attempts = 0;
    while kept.len() < target && attempts < 20 * target {
        attempts += 1;
        let pair = draw(rng);
        if accept(batch, pair, cfg) {
            kept.push(pair);
        }
    }
    kept
}

/// `(batch, ring pixels, interior pixels)` for one instance.
pub type EdgePool = (usize, Vec<usize>, Vec<usize>);

/// Per-instance pixel pools for edge sampling, both restricted to
/// dense-supervised pixels. Instances with an empty pool are skipped.
pub fn edge_pools(batch: &DepthSupervisionBatch, radius: usize) -> Result<Vec<EdgePool>> {
    let Some(masks) = &batch.instance_masks else {
        return Ok(Vec::new());
    };
    let (b, h, w) = batch.dims();
    let k = masks.shape()[1];
    let dense = batch.mask_dense.data();
    let mut pools = Vec::new();
    for n in 0..b {
        for inst in 0..k {
            let plane = &masks.data()[(n * k + inst) * h * w..][..h * w];
            let mask = Tensor::new(vec![h, w], plane.to_vec())?;
            let ring = dilated_ring(&mask, radius)?;
            let supervised = |i: &usize| is_set(dense[n * h * w + i]);
            let ring_px: Vec<usize> = (0..h * w).filter(|i| is_set(ring.data()[*i])).filter(supervised).collect();
            let inner_px: Vec<usize> = (0..h * w).filter(|i| is_set(plane[*i])).filter(supervised).collect();
            if !ring_px.is_empty() && !inner_px.is_empty() {
                pools.push((n, ring_px, inner_px));
            }
        }
    }
    Ok(pools)
}

/// Cross-boundary pairs: `i` in an instance's dilated ring, `j` inside it.
pub fn sample_edge_pairs(
    batch: &DepthSupervisionBatch,
    cfg: &RankingConfig,
    rng: &mut SeededRng,
) -> Result<Vec<PixelPair>> {
    cfg.validate()?;
    let pools = edge_pools(batch, cfg.dilation_radius)?;
    if pools.is_empty() || cfg.n_edge_pairs == 0 {
        return Ok(Vec::new());
    }
    let (_, _, w) = batch.dims();
    Ok(rejection_sample(batch, cfg, cfg.n_edge_pairs, rng, |rng| {
        let (n, ring, inner) = &pools[rng.below(pools.len())];
        let i = ring[rng.below(ring.len())];
        let j = inner[rng.below(inner.len())];
        PixelPair {
            i: pixel_at(*n, i, w),
            j: pixel_at(*n, j, w),
        }
    }))
}

/// Per batch element, the dense-supervised pixels outside every instance.
pub fn background_pools(batch: &DepthSupervisionBatch) -> Vec<(usize, Vec<usize>)> {
    let (b, h, w) = batch.dims();
    let k = batch.instance_count();
    let dense = batch.mask_dense.data();
    (0..b)
        .filter_map(|n| {
            let px: Vec<usize> = (0..h * w)
                .filter(|&i| is_set(dense[n * h * w + i]))
                .filter(|&i| {
                    batch.instance_masks.as_ref().is_none_or(|m| {
                        (0..k).all(|inst| !is_set(m.data()[(n * k + inst) * h * w + i]))
                    })
                })
                .collect();
            (!px.is_empty()).then_some((n, px))
        })
        .collect()
}

/// Background pairs, both pixels outside every instance mask.
pub fn sample_global_pairs(
    batch: &DepthSupervisionBatch,
    cfg: &RankingConfig,
    rng: &mut SeededRng,
) -> Result<Vec<PixelPair>> {
    cfg.validate()?;
    let pools = background_pools(batch);
    if pools.is_empty() || cfg.n_global_pairs == 0 {
        return Ok(Vec::new());
    }
    let (_, _, w) = batch.dims();
    Ok(rejection_sample(batch, cfg, cfg.n_global_pairs, rng, |rng| {
        let (n, px) = &pools[rng.below(pools.len())];
        let i = px[rng.below(px.len())];
        let j = px[rng.below(px.len())];
        PixelPair {
            i: pixel_at(*n, i, w),
            j: pixel_at(*n, j, w),
        }
    }))
}

#[derive(Clone, Debug, PartialEq)]
pub struct RelativeLoss {
    /// `w_edge * l_edge + w_global * l_global`.
    pub l_relative: f64,
    pub l_edge: f64,
    pub l_global: f64,
    pub edge_pairs: Vec<PixelPair>,
    pub global_pairs: Vec<PixelPair>,
}

fn mean_pair_loss(dhat: &Tensor, d_dense: &Tensor, pairs: &[PixelPair], h: usize, w: usize) -> f64 {
    if pairs.is_empty() {
        return 0.0;
    }
    let (p, g) = (dhat.data(), d_dense.data());
    let total: f64 = pairs
        .iter()
        .map(|pair| {
            let (a, b) = (flat(pair.i, h, w), flat(pair.j, h, w));
            pair_rank_loss(p[a], p[b], g[a], g[b])
        })
        .sum();
    total / pairs.len() as f64
}

/// Ranking loss of a decoded depth map `dhat` (`[B, H, W]`). Edge pairs are
/// drawn before global pairs from the same stream.
pub fn relative_loss(
    dhat: &Tensor,
    batch: &DepthSupervisionBatch,
    cfg: &RankingConfig,
    rng: &mut SeededRng,
) -> Result<RelativeLoss> {
    dhat.expect_shape("relative_loss", "dhat", batch.d_dense.shape())?;
    let edge_pairs = sample_edge_pairs(batch, cfg, rng)?;
    let global_pairs = sample_global_pairs(batch, cfg, rng)?;
    let (_, h, w) = batch.dims();
    let l_edge = mean_pair_loss(dhat, &batch.d_dense, &edge_pairs, h, w);
    let l_global = mean_pair_loss(dhat, &batch.d_dense, &global_pairs, h, w);
    Ok(RelativeLoss {
        l_relative: cfg.w_edge * l_edge + cfg.w_global * l_global,
        l_edge,
        l_global,
        edge_pairs,
        global_pairs,
    })
}

/// Gradient of `upstream * l_relative` with respect to `dhat`, for the pairs
/// recorded in `loss`.
pub fn relative_loss_backward(
    dhat: &Tensor,
    batch: &DepthSupervisionBatch,
    cfg: &RankingConfig,
    loss: &RelativeLoss,
    upstream: f64,
) -> Result<Tensor> {
    dhat.expect_shape("relative_loss_backward", "dhat", batch.d_dense.shape())?;
    let (_, h, w) = batch.dims();
    let (p, g) = (dhat.data(), batch.d_dense.data());
    let mut grad = vec![0.0; dhat.len()];
    for (pairs, weight) in [(&loss.edge_pairs, cfg.w_edge), (&loss.global_pairs, cfg.w_global)] {
        if pairs.is_empty() {
            continue;
        }
        let s = upstream * weight / pairs.len() as f64;
        for pair in pairs.iter() {
            let (a, b) = (flat(pair.i, h, w), flat(pair.j, h, w));
            let (ga, gb) = pair_rank_loss_grad(p[a], p[b], g[a], g[b]);
            grad[a] += s * ga;
            grad[b] += s * gb;
        }
    }
    Tensor::new(dhat.shape().to_vec(), grad)
}
