//! Randomised property suites. Each property runs `trials` independent
//! trials from its own seeded stream and reports its worst measurement. When
//! a property fails, the inputs of its smallest failing trial are written as
//! RTEN files under `<dump_dir>/<property>/`.

use std::path::Path;

use crate::dgtf::{dcn_align, gated_update_traced, predict_offsets, DgtfParams, Offsets};
use crate::error::{Error, Result};
use crate::igdr::{foreground_gate, igdr_forward, softmax_assign, IgdrInputs, IgdrParams};
use crate::ops::{bilinear_sample, conv2d, sigmoid, softmax};
use crate::pdf::{
    dilated_ring, dynamic_threshold, gaussian_target, kl_prob_loss, pair_rank_loss, sample_edge_pairs,
    sample_global_pairs, DepthBinSpec, DepthSupervisionBatch, PixelPair, RankingConfig,
};
use crate::rng::SeededRng;
use crate::rten::{self, Dtype};
use crate::tensor::Tensor;

use super::config::HarnessConfig;
use super::gradcheck::stream_id;
use super::report::{timed, CheckRecord, CheckReport};

pub const SUITES: [&str; 5] = ["tensor", "pdf", "dgtf", "igdr", "all"];
/// The KL clamp on `P` may push a matching pair marginally below zero.
pub const KL_FLOOR_SLACK: f64 = 1e-9;

/// One trial's measurement and the tensors that reproduce it.
pub struct Trial {
    pub value: f64,
    pub inputs: Vec<(String, Tensor)>,
}

impl Trial {
    fn new(value: f64, inputs: Vec<(&str, Tensor)>) -> Self {
        Trial {
            value,
            inputs: inputs.into_iter().map(|(n, t)| (n.to_string(), t)).collect(),
        }
    }
}

pub struct Property {
    pub name: &'static str,
    /// The property holds on a trial iff its value is at most `tol`.
    pub tol: f64,
    pub run: fn(&HarnessConfig, &mut SeededRng) -> Result<Trial>,
}

/// Naive six-loop stride-1 zero-padded cross-correlation.
pub fn conv2d_reference(input: &Tensor, kernel: &Tensor, bias: &Tensor, pad: (usize, usize)) -> Result<Tensor> {
    let (b, c, h, w) = input.dims4("conv2d_reference")?;
    let (o, kc, kh, kw) = kernel.dims4("conv2d_reference")?;
    if kc != c || bias.len() != o || h + 2 * pad.0 < kh || w + 2 * pad.1 < kw {
        return Err(Error::invalid("conv2d_reference", "incompatible shapes"));
    }
    let (oh, ow) = (h + 2 * pad.0 + 1 - kh, w + 2 * pad.1 + 1 - kw);
    let mut out = Tensor::zeros(&[b, o, oh, ow]);
    for n in 0..b {
        for oc in 0..o {
            for y in 0..oh {
                for x in 0..ow {
                    let mut acc = bias.data()[oc];
                    for ic in 0..c {
                        for ky in 0..kh {
                            for kx in 0..kw {
                                let iy = (y + ky) as isize - pad.0 as isize;
                                let ix = (x + kx) as isize - pad.1 as isize;
                                if iy >= 0 && ix >= 0 && (iy as usize) < h && (ix as usize) < w {
                                    acc += kernel.at(&[oc, ic, ky, kx]) * input.at(&[n, ic, iy as usize, ix as usize]);
                                }
                            }
                        }
                    }
                    out.set(&[n, oc, y, x], acc);
                }
            }
        }
    }
    Ok(out)
}

fn between(rng: &mut SeededRng, lo: usize, hi: usize) -> usize {
    lo + rng.below(hi - lo + 1)
}

fn count(flags: impl IntoIterator<Item = bool>) -> f64 {
    flags.into_iter().filter(|&bad| bad).count() as f64
}

/// Distance outside `[min(a, b), max(a, b)]`, in units of the rounding of the
/// larger endpoint.
fn convexity_ulps(v: f64, a: f64, b: f64) -> f64 {
    let excess = (a.min(b) - v).max(v - a.max(b)).max(0.0);
    excess / (f64::EPSILON * a.abs().max(b.abs()).max(f64::MIN_POSITIVE))
}

// ---- tensor ----

fn t_conv_reference(_: &HarnessConfig, rng: &mut SeededRng) -> Result<Trial> {
    let (b, c, o) = (between(rng, 1, 2), between(rng, 1, 4), between(rng, 1, 4));
    let (h, w) = (between(rng, 1, 8), between(rng, 1, 8));
    let k = [1, 3, 5][rng.below(3)];
    let x = rng.uniform_tensor(&[b, c, h, w], -2.0, 2.0);
    let kernel = rng.uniform_tensor(&[o, c, k, k], -2.0, 2.0);
    let bias = rng.uniform_tensor(&[o], -2.0, 2.0);
    let pad = (k / 2, k / 2);
    let err = conv2d(&x, &kernel, &bias, pad)?.max_abs_diff(&conv2d_reference(&x, &kernel, &bias, pad)?);
    Ok(Trial::new(err, vec![("input", x), ("kernel", kernel), ("bias", bias)]))
}

fn random_logits(rng: &mut SeededRng) -> Tensor {
    let shape = [between(rng, 1, 2), between(rng, 1, 6), between(rng, 1, 5), between(rng, 1, 5)];
    rng.uniform_tensor(&shape, -10.0, 10.0)
}

fn axis_sums(p: &Tensor) -> Vec<f64> {
    let s = p.shape();
    let (n, hw) = (s[1], s[2] * s[3]);
    (0..s[0] * hw)
        .map(|i| (0..n).map(|k| p.data()[((i / hw) * n + k) * hw + i % hw]).sum())
        .collect()
}

fn t_softmax_normalized(_: &HarnessConfig, rng: &mut SeededRng) -> Result<Trial> {
    let x = random_logits(rng);
    let temp = rng.uniform_in(0.1, 3.0);
    let p = softmax(&x, 1, temp)?;
    let dev = axis_sums(&p).iter().map(|s| (s - 1.0).abs()).fold(0.0, f64::max);
    let neg = if p.data().iter().any(|&v| !(v >= 0.0)) { f64::INFINITY } else { 0.0 };
    Ok(Trial::new(dev.max(neg), vec![("logits", x), ("temperature", Tensor::scalar(temp))]))
}

/// Adds an independent constant to every slice along axis 1.
fn shift_slices(x: &Tensor, rng: &mut SeededRng) -> Tensor {
    let s = x.shape();
    let hw = s[2] * s[3];
    let c: Vec<f64> = (0..s[0] * hw).map(|_| rng.uniform_in(-5.0, 5.0)).collect();
    Tensor::from_fn(s, |i| x.data()[i] + c[(i / (s[1] * hw)) * hw + i % hw])
}

fn t_softmax_shift(_: &HarnessConfig, rng: &mut SeededRng) -> Result<Trial> {
    let x = random_logits(rng);
    let shifted = shift_slices(&x, rng);
    let err = softmax(&x, 1, 1.0)?.max_abs_diff(&softmax(&shifted, 1, 1.0)?);
    Ok(Trial::new(err, vec![("logits", x), ("shifted", shifted)]))
}

fn t_sigmoid_range(_: &HarnessConfig, rng: &mut SeededRng) -> Result<Trial> {
    let x = rng.uniform_tensor(&[64], -800.0, 800.0);
    let bad = count(sigmoid(&x).data().iter().map(|&v| !(v > 0.0 && v < 1.0)));
    Ok(Trial::new(bad, vec![("input", x)]))
}

fn t_bilinear_integer(_: &HarnessConfig, rng: &mut SeededRng) -> Result<Trial> {
    let (c, h, w) = (between(rng, 1, 3), between(rng, 1, 6), between(rng, 1, 6));
    let f = rng.uniform_tensor(&[c, h, w], -2.0, 2.0);
    let mut err: f64 = 0.0;
    for y in 0..h {
        for x in 0..w {
            let s = bilinear_sample(&f, y as f64, x as f64)?;
            for ch in 0..c {
                err = err.max((s.data()[ch] - f.at(&[ch, y, x])).abs());
            }
        }
    }
    Ok(Trial::new(err, vec![("feature", f)]))
}

/// `|f(p + e) - f(p)| / (4 |e| max|feature|)`; the property bounds it by one.
fn t_bilinear_continuity(_: &HarnessConfig, rng: &mut SeededRng) -> Result<Trial> {
    let (c, h, w) = (between(rng, 1, 3), between(rng, 2, 6), between(rng, 2, 6));
    let f = rng.uniform_tensor(&[c, h, w], -2.0, 2.0);
    let (y, x) = (rng.uniform_in(-1.0, h as f64), rng.uniform_in(-1.0, w as f64));
    let eps = rng.uniform_in(0.0, 1e-6);
    let (ey, ex) = (eps * rng.uniform_in(-1.0, 1.0), eps * rng.uniform_in(-1.0, 1.0));
    let a = bilinear_sample(&f, y, x)?;
    let b = bilinear_sample(&f, y + ey, x + ex)?;
    let bound = 4.0 * ey.abs().max(ex.abs()) * f.max_abs();
    let ratio = if bound > 0.0 { a.max_abs_diff(&b) / bound } else { a.max_abs_diff(&b) };
    Ok(Trial::new(ratio, vec![("feature", f), ("coords", Tensor::new(vec![4], vec![y, x, ey, ex])?)]))
}

fn t_rten_roundtrip(_: &HarnessConfig, rng: &mut SeededRng) -> Result<Trial> {
    let rank = between(rng, 0, 5);
    let shape: Vec<usize> = (0..rank).map(|_| between(rng, 1, 4)).collect();
    let t = rng.normal_tensor(&shape, 1e3);
    let (back, dtype) = rten::decode(&rten::encode(&t, Dtype::F64))?;
    let err = if dtype == Dtype::F64 && back.shape() == t.shape() {
        count(back.data().iter().zip(t.data()).map(|(a, b)| a.to_bits() != b.to_bits()))
    } else {
        f64::INFINITY
    };
    Ok(Trial::new(err, vec![("tensor", t)]))
}

// ---- pdf ----

/// A random frame: a sloped background with one to three rectangular
/// objects at distinct depths, most pixels dense-supervised.
fn random_scene(rng: &mut SeededRng, flat: bool) -> Result<DepthSupervisionBatch> {
    let bins = DepthBinSpec::new(1.0, 70.0, 8)?;
    let (b, h, w) = (between(rng, 1, 2), between(rng, 6, 16), between(rng, 6, 16));
    let k = between(rng, 1, 3);
    let mut masks = Tensor::zeros(&[b, k, h, w]);
    let mut dense = Tensor::zeros(&[b, h, w]);
    for n in 0..b {
        let (base, gy, gx) = (rng.uniform_in(20.0, 50.0), rng.uniform_in(-1.0, 1.0), rng.uniform_in(-1.0, 1.0));
        for i in 0..h * w {
            let (y, x) = ((i / w) as f64, (i % w) as f64);
            dense.data_mut()[n * h * w + i] = if flat { 30.0 } else { base + gy * y + gx * x };
        }
        for inst in 0..k {
            let (y0, x0) = (rng.below(h - 2), rng.below(w - 2));
            let (y1, x1) = (between(rng, y0 + 1, h - 1), between(rng, x0 + 1, w - 1));
            let depth = rng.uniform_in(2.0, 60.0);
            for y in y0..=y1 {
                for x in x0..=x1 {
                    masks.set(&[n, inst, y, x], 1.0);
                    if !flat {
                        dense.set(&[n, y, x], depth);
                    }
                }
            }
        }
    }
    let mask_dense = Tensor::from_fn(&[b, h, w], |_| if rng.uniform() < 0.85 { 1.0 } else { 0.0 });
    let prob = super::fixtures::random_prob(&[b, bins.count(), h, w], rng)?;
    DepthSupervisionBatch::new(prob, Tensor::zeros(&[b, h, w]), Tensor::zeros(&[b, h, w]), dense, mask_dense, Some(masks))
}

fn random_ranking(rng: &mut SeededRng) -> RankingConfig {
    RankingConfig {
        tau_abs: rng.uniform_in(0.1, 2.0),
        tau_rel: rng.uniform_in(0.0, 0.1),
        n_edge_pairs: between(rng, 1, 64),
        n_global_pairs: between(rng, 1, 64),
        dilation_radius: between(rng, 1, 3),
        rng_seed: rng.next_u64(),
        ..RankingConfig::default()
    }
}

fn scene_tensors(batch: &DepthSupervisionBatch) -> Vec<(&'static str, Tensor)> {
    vec![
        ("d_dense", batch.d_dense.clone()),
        ("mask_dense", batch.mask_dense.clone()),
        ("instance_masks", batch.instance_masks.clone().unwrap_or_else(|| Tensor::zeros(&[0]))),
    ]
}

fn mask_at(batch: &DepthSupervisionBatch, n: usize, inst: usize, y: usize, x: usize) -> bool {
    batch.instance_masks.as_ref().is_some_and(|m| m.at(&[n, inst, y, x]) > 0.5)
}

/// Chebyshev distance from `(y, x)` to the nearest pixel of one instance mask.
fn distance_to_mask(batch: &DepthSupervisionBatch, n: usize, inst: usize, y: usize, x: usize) -> usize {
    let (_, h, w) = batch.dims();
    let mut best = usize::MAX;
    for yy in 0..h {
        for xx in 0..w {
            if mask_at(batch, n, inst, yy, xx) {
                best = best.min(yy.abs_diff(y).max(xx.abs_diff(x)));
            }
        }
    }
    best
}

fn pair_accepted(batch: &DepthSupervisionBatch, pair: &PixelPair, cfg: &RankingConfig) -> bool {
    let di = batch.d_dense.at(&[pair.i.batch, pair.i.y, pair.i.x]);
    let dj = batch.d_dense.at(&[pair.j.batch, pair.j.y, pair.j.x]);
    let tau = cfg.tau_abs.max(cfg.tau_rel * (di + dj) / 2.0);
    (di - dj).abs() > tau
}

fn supervised(batch: &DepthSupervisionBatch, p: crate::pdf::Pixel) -> bool {
    batch.mask_dense.at(&[p.batch, p.y, p.x]) > 0.5
}

fn p_edge_contract(_: &HarnessConfig, rng: &mut SeededRng) -> Result<Trial> {
    let batch = random_scene(rng, false)?;
    let cfg = random_ranking(rng);
    let pairs = sample_edge_pairs(&batch, &cfg, &mut SeededRng::new(cfg.rng_seed))?;
    let k = batch.instance_count();
    let r = cfg.dilation_radius;
    let bad = count(pairs.iter().map(|p| {
        let same_frame = p.i.batch == p.j.batch;
        let ring_and_interior = (0..k).any(|inst| {
            let d = distance_to_mask(&batch, p.i.batch, inst, p.i.y, p.i.x);
            (1..=r).contains(&d) && mask_at(&batch, p.j.batch, inst, p.j.y, p.j.x)
        });
        !(same_frame && ring_and_interior && supervised(&batch, p.i) && supervised(&batch, p.j) && pair_accepted(&batch, p, &cfg))
    }));
    Ok(Trial::new(bad, scene_tensors(&batch)))
}

fn p_global_contract(_: &HarnessConfig, rng: &mut SeededRng) -> Result<Trial> {
    let batch = random_scene(rng, false)?;
    let cfg = random_ranking(rng);
    let pairs = sample_global_pairs(&batch, &cfg, &mut SeededRng::new(cfg.rng_seed))?;
    let k = batch.instance_count();
    let bad = count(pairs.iter().map(|p| {
        let outside = |q: crate::pdf::Pixel| (0..k).all(|inst| !mask_at(&batch, q.batch, inst, q.y, q.x));
        !(p.i.batch == p.j.batch
            && outside(p.i)
            && outside(p.j)
            && supervised(&batch, p.i)
            && supervised(&batch, p.j)
            && pair_accepted(&batch, p, &cfg))
    }));
    Ok(Trial::new(bad, scene_tensors(&batch)))
}

fn p_flat_no_pairs(_: &HarnessConfig, rng: &mut SeededRng) -> Result<Trial> {
    let batch = random_scene(rng, true)?;
    let cfg = random_ranking(rng);
    let mut stream = SeededRng::new(cfg.rng_seed);
    let n = sample_edge_pairs(&batch, &cfg, &mut stream)?.len() + sample_global_pairs(&batch, &cfg, &mut stream)?.len();
    Ok(Trial::new(n as f64, scene_tensors(&batch)))
}

fn p_sampling_deterministic(_: &HarnessConfig, rng: &mut SeededRng) -> Result<Trial> {
    let batch = random_scene(rng, false)?;
    let cfg = random_ranking(rng);
    let draw = || -> Result<(Vec<PixelPair>, Vec<PixelPair>)> {
        let mut s = SeededRng::new(cfg.rng_seed);
        Ok((sample_edge_pairs(&batch, &cfg, &mut s)?, sample_global_pairs(&batch, &cfg, &mut s)?))
    };
    let same = draw()? == draw()?;
    Ok(Trial::new(if same { 0.0 } else { 1.0 }, scene_tensors(&batch)))
}

fn p_ring_contract(_: &HarnessConfig, rng: &mut SeededRng) -> Result<Trial> {
    let (h, w) = (between(rng, 1, 12), between(rng, 1, 12));
    let density = rng.uniform_in(0.0, 0.3);
    let mask = Tensor::from_fn(&[h, w], |_| if rng.uniform() < density { 1.0 } else { 0.0 });
    let r = between(rng, 1, 3);
    let ring = dilated_ring(&mask, r)?;
    let mut bad = 0.0;
    for y in 0..h {
        for x in 0..w {
            let mut d = usize::MAX;
            for yy in 0..h {
                for xx in 0..w {
                    if mask.at(&[yy, xx]) > 0.5 {
                        d = d.min(yy.abs_diff(y).max(xx.abs_diff(x)));
                    }
                }
            }
            let expected = (1..=r).contains(&d);
            if (ring.at(&[y, x]) > 0.5) != expected {
                bad += 1.0;
            }
        }
    }
    Ok(Trial::new(bad, vec![("mask", mask), ("radius", Tensor::scalar(r as f64))]))
}

fn random_bins(rng: &mut SeededRng) -> Result<DepthBinSpec> {
    let lo = rng.uniform_in(0.5, 5.0);
    DepthBinSpec::new(lo, lo + rng.uniform_in(5.0, 80.0), between(rng, 2, 80))
}

fn p_gaussian_normalized(_: &HarnessConfig, rng: &mut SeededRng) -> Result<Trial> {
    let bins = random_bins(rng)?;
    let depth = rng.uniform_in(bins.d_min(), bins.d_max());
    let sigma = rng.uniform_in(0.05, 5.0);
    let g = gaussian_target(depth, &bins, sigma)?;
    let dev = (g.sum() - 1.0).abs();
    let neg = if g.data().iter().any(|&v| !(v >= 0.0)) { f64::INFINITY } else { 0.0 };
    Ok(Trial::new(dev.max(neg), vec![("params", Tensor::new(vec![5], vec![bins.d_min(), bins.d_max(), bins.count() as f64, depth, sigma])?)]))
}

fn sparse_batch(rng: &mut SeededRng, bins: &DepthBinSpec, sigma: f64, matching: bool) -> Result<DepthSupervisionBatch> {
    let (b, h, w) = (between(rng, 1, 2), between(rng, 1, 6), between(rng, 1, 6));
    let d = bins.count();
    let depth = rng.uniform_tensor(&[b, h, w], bins.d_min(), bins.d_max());
    let mask = Tensor::from_fn(&[b, h, w], |_| if rng.uniform() < 0.6 { 1.0 } else { 0.0 });
    let mut prob = super::fixtures::random_prob(&[b, d, h, w], rng)?;
    if matching {
        for n in 0..b {
            for px in 0..h * w {
                let g = gaussian_target(depth.data()[n * h * w + px], bins, sigma)?;
                for k in 0..d {
                    prob.data_mut()[(n * d + k) * h * w + px] = g.data()[k];
                }
            }
        }
    }
    DepthSupervisionBatch::new(prob, depth.clone(), mask, depth, Tensor::ones(&[b, h, w]), None)
}

fn p_kl_matching(_: &HarnessConfig, rng: &mut SeededRng) -> Result<Trial> {
    let bins = random_bins(rng)?;
    let sigma = rng.uniform_in(0.5, 3.0) * bins.width();
    let batch = sparse_batch(rng, &bins, sigma, true)?;
    let kl = kl_prob_loss(&batch, &bins, sigma)?.value;
    Ok(Trial::new(kl.abs(), vec![("prob", batch.prob), ("d_sparse", batch.d_sparse), ("mask_sparse", batch.mask_sparse)]))
}

fn p_kl_nonnegative(_: &HarnessConfig, rng: &mut SeededRng) -> Result<Trial> {
    let bins = random_bins(rng)?;
    let sigma = rng.uniform_in(0.5, 3.0) * bins.width();
    let batch = sparse_batch(rng, &bins, sigma, false)?;
    let kl = kl_prob_loss(&batch, &bins, sigma)?.value;
    let v = if kl.is_nan() { f64::INFINITY } else { (-kl).max(0.0) };
    Ok(Trial::new(v, vec![("prob", batch.prob), ("d_sparse", batch.d_sparse), ("mask_sparse", batch.mask_sparse)]))
}

fn distinct_depths(rng: &mut SeededRng) -> (f64, f64) {
    let a = rng.uniform_in(1.0, 70.0);
    let b = loop {
        let b = rng.uniform_in(1.0, 70.0);
        if b != a {
            break b;
        }
    };
    (a, b)
}

fn p_pair_zero_margin(_: &HarnessConfig, rng: &mut SeededRng) -> Result<Trial> {
    let d = rng.uniform_in(1.0, 70.0);
    let (gi, gj) = distinct_depths(rng);
    let err = (pair_rank_loss(d, d, gi, gj) - std::f64::consts::LN_2).abs();
    Ok(Trial::new(err, vec![("args", Tensor::new(vec![3], vec![d, gi, gj])?)]))
}

fn p_pair_symmetric(_: &HarnessConfig, rng: &mut SeededRng) -> Result<Trial> {
    let (di, dj) = (rng.uniform_in(1.0, 70.0), rng.uniform_in(1.0, 70.0));
    let (gi, gj) = distinct_depths(rng);
    let err = (pair_rank_loss(di, dj, gi, gj) - pair_rank_loss(dj, di, gj, gi)).abs();
    Ok(Trial::new(err, vec![("args", Tensor::new(vec![4], vec![di, dj, gi, gj])?)]))
}

/// Widening the predicted margin in the ground-truth direction over a grid
/// of steps must strictly lower the loss at every step.
fn p_pair_monotone(_: &HarnessConfig, rng: &mut SeededRng) -> Result<Trial> {
    let (gi, gj) = distinct_depths(rng);
    let s = if gi > gj { 1.0 } else { -1.0 };
    let dj = rng.uniform_in(1.0, 70.0);
    let start = rng.uniform_in(-10.0, 10.0);
    let losses: Vec<f64> = (0..40).map(|k| pair_rank_loss(dj + s * (start + 0.25 * k as f64), dj, gi, gj)).collect();
    let bad = count(losses.windows(2).map(|p| !(p[1] < p[0])));
    Ok(Trial::new(bad, vec![("args", Tensor::new(vec![4], vec![start, dj, gi, gj])?)]))
}

fn p_threshold_rule(_: &HarnessConfig, rng: &mut SeededRng) -> Result<Trial> {
    let cfg = random_ranking(rng);
    let (di, dj) = (rng.uniform_in(0.5, 80.0), rng.uniform_in(0.5, 80.0));
    let (tau, keep) = dynamic_threshold(di, dj, &cfg);
    let expect_tau = if cfg.tau_rel * (di + dj) / 2.0 > cfg.tau_abs { cfg.tau_rel * (di + dj) / 2.0 } else { cfg.tau_abs };
    let bad = (tau != expect_tau) || (keep != ((di - dj).abs() > expect_tau));
    Ok(Trial::new(
        if bad { 1.0 } else { 0.0 },
        vec![("args", Tensor::new(vec![4], vec![di, dj, cfg.tau_abs, cfg.tau_rel])?)],
    ))
}

// ---- dgtf ----

fn random_dgtf(rng: &mut SeededRng, scale: f64) -> Result<(DgtfParams, usize, usize, usize)> {
    let c = between(rng, 1, 4);
    let divisors: Vec<usize> = (1..=c).filter(|&g| c.is_multiple_of(g)).collect();
    let g = divisors[rng.below(divisors.len())];
    let (h, w) = (between(rng, 1, 10), between(rng, 1, 10));
    Ok((DgtfParams::random(c, 3, g, scale, rng)?, c, h, w))
}

fn d_degenerate(_: &HarnessConfig, rng: &mut SeededRng) -> Result<Trial> {
    let (mut p, c, h, w) = random_dgtf(rng, 1.0)?;
    p.dcn.weight = rng.uniform_tensor(p.dcn.weight.shape(), -2.0, 2.0);
    let b = between(rng, 1, 2);
    let hist = rng.uniform_tensor(&[b, c, h, w], -2.0, 2.0);
    let taps = 9 * p.deformable_groups;
    let off = Offsets {
        delta: Tensor::zeros(&[b, 2 * taps, h, w]),
        mask: Tensor::ones(&[b, taps, h, w]),
    };
    let err = dcn_align(&hist, &off, &p)?.max_abs_diff(&conv2d(&hist, &p.dcn.weight, &p.dcn.bias, (1, 1))?);
    Ok(Trial::new(err, vec![("h_prev", hist), ("dcn.weight", p.dcn.weight.clone()), ("dcn.bias", p.dcn.bias.clone())]))
}

fn open_unit(v: f64) -> bool {
    v > 0.0 && v < 1.0
}

fn d_gate_ranges(_: &HarnessConfig, rng: &mut SeededRng) -> Result<Trial> {
    let (p, c, h, w) = random_dgtf(rng, 1.0)?;
    let x = rng.uniform_tensor(&[1, c, h, w], -2.0, 2.0);
    let hist = rng.uniform_tensor(&[1, c, h, w], -2.0, 2.0);
    let off = predict_offsets(&x, &hist, &p)?;
    let aligned = dcn_align(&hist, &off, &p)?;
    let t = gated_update_traced(&x, &aligned, &p)?;
    let bad = count(off.mask.data().iter().map(|&v| !open_unit(v)))
        + count(t.reset.data().iter().map(|&v| !open_unit(v)))
        + count(t.update.data().iter().map(|&v| !open_unit(v)))
        // tanh rounds to exactly +-1 in f64 once |pre-activation| > ~19.06.
        + count(t.candidate.data().iter().map(|&v| !(-1.0..=1.0).contains(&v)));
    Ok(Trial::new(bad, vec![("x", x), ("h_prev", hist)]))
}

/// Worst excursion of the GRU output outside `[X, H~]`, in ulps.
fn d_blend_convexity(_: &HarnessConfig, rng: &mut SeededRng) -> Result<Trial> {
    let (p, c, h, w) = random_dgtf(rng, 1.0)?;
    let x = rng.uniform_tensor(&[1, c, h, w], -2.0, 2.0);
    let aligned = rng.uniform_tensor(&[1, c, h, w], -2.0, 2.0);
    let t = gated_update_traced(&x, &aligned, &p)?;
    let worst = t
        .output
        .data()
        .iter()
        .zip(x.data())
        .zip(t.candidate.data())
        .map(|((&o, &a), &b)| convexity_ulps(o, a, b))
        .fold(0.0, f64::max);
    Ok(Trial::new(worst, vec![("x", x), ("h_aligned", aligned)]))
}

fn d_shift_compensation(_: &HarnessConfig, rng: &mut SeededRng) -> Result<Trial> {
    let c = between(rng, 1, 3);
    let mut p = DgtfParams::random(c, 3, 1, 1.0, rng)?;
    p.dcn.weight = rng.uniform_tensor(p.dcn.weight.shape(), -2.0, 2.0);
    let (dy, dx) = (between(rng, 0, 4) as i64 - 2, between(rng, 0, 4) as i64 - 2);
    let (h, w) = (between(rng, 7, 10), between(rng, 7, 10));
    let prev = rng.uniform_tensor(&[1, c, h, w], -2.0, 2.0);
    let cur = crate::synth::shift_feature(&prev, dy, dx)?;
    let err = super::demo::shift_alignment_error(&prev, &cur, (dy, dx), &p)?;
    Ok(Trial::new(err, vec![("h_prev", prev), ("shift", Tensor::new(vec![2], vec![dy as f64, dx as f64])?)]))
}

// ---- igdr ----

fn random_igdr(rng: &mut SeededRng) -> Result<(IgdrInputs, IgdrParams)> {
    let (b, n, c, ci) = (between(rng, 1, 2), between(rng, 1, 4), between(rng, 1, 3), between(rng, 1, 4));
    let (h, w, r) = (between(rng, 1, 6), between(rng, 1, 6), between(rng, 1, 3));
    let inputs = IgdrInputs::new(
        rng.uniform_tensor(&[b, c, h, w], -2.0, 2.0),
        rng.uniform_tensor(&[n, ci, r, r], -2.0, 2.0),
        rng.uniform_tensor(&[b, n, h, w], 0.0, 2.0),
        rng.uniform_in(0.1, 3.0),
    )?;
    let mut params = IgdrParams::random(c, ci, 1.0, rng);
    params.conv_gamma.bias.data_mut().iter_mut().for_each(|v| *v += 1.0);
    Ok((inputs, params))
}

fn igdr_tensors(inputs: &IgdrInputs) -> Vec<(&'static str, Tensor)> {
    let mut out = vec![("f_rc", inputs.f_rc.clone()), ("temperature", Tensor::scalar(inputs.temperature))];
    if let Some(inst) = &inputs.instances {
        out.push(("e_features", inst.e_features.clone()));
        out.push(("s_bev", inst.s_bev.clone()));
    }
    out
}

fn s_bev(inputs: &IgdrInputs) -> &Tensor {
    &inputs.instances.as_ref().expect("random_igdr has instances").s_bev
}

fn i_assignment_normalized(_: &HarnessConfig, rng: &mut SeededRng) -> Result<Trial> {
    let (inputs, _) = random_igdr(rng)?;
    let a = softmax_assign(s_bev(&inputs), inputs.temperature)?;
    let dev = axis_sums(&a).iter().map(|s| (s - 1.0).abs()).fold(0.0, f64::max);
    let neg = if a.data().iter().any(|&v| !(v >= 0.0)) { f64::INFINITY } else { 0.0 };
    Ok(Trial::new(dev.max(neg), igdr_tensors(&inputs)))
}

fn i_assignment_shift(_: &HarnessConfig, rng: &mut SeededRng) -> Result<Trial> {
    let (inputs, _) = random_igdr(rng)?;
    let s = s_bev(&inputs);
    let shifted = shift_slices(s, rng);
    let err = softmax_assign(s, inputs.temperature)?.max_abs_diff(&softmax_assign(&shifted, inputs.temperature)?);
    let mut tensors = igdr_tensors(&inputs);
    tensors.push(("s_shifted", shifted));
    Ok(Trial::new(err, tensors))
}

fn i_fuse_convexity(_: &HarnessConfig, rng: &mut SeededRng) -> Result<Trial> {
    let (inputs, params) = random_igdr(rng)?;
    let out = igdr_forward(&inputs, &params)?;
    let cal = &out.intermediates.as_ref().expect("instances present").f_calibrated;
    let worst = out
        .f_final
        .data()
        .iter()
        .zip(inputs.f_rc.data())
        .zip(cal.data())
        .map(|((&o, &a), &b)| convexity_ulps(o, a, b))
        .fold(0.0, f64::max);
    Ok(Trial::new(worst, igdr_tensors(&inputs)))
}

fn i_identity(_: &HarnessConfig, rng: &mut SeededRng) -> Result<Trial> {
    let (inputs, params) = random_igdr(rng)?;
    let id = IgdrParams::identity(params.channels(), params.inst_channels());
    let err = igdr_forward(&inputs, &id)?.f_final.max_abs_diff(&inputs.f_rc);
    Ok(Trial::new(err, igdr_tensors(&inputs)))
}

fn i_passthrough(_: &HarnessConfig, rng: &mut SeededRng) -> Result<Trial> {
    let (inputs, params) = random_igdr(rng)?;
    let bare = IgdrInputs::without_instances(inputs.f_rc.clone(), inputs.temperature);
    let out = igdr_forward(&bare, &params)?;
    let err = out.f_final.max_abs_diff(&inputs.f_rc) + if out.passthrough() { 0.0 } else { 1.0 };
    Ok(Trial::new(err, igdr_tensors(&bare)))
}

/// Two score maps with equal per-pixel sums but different splits across
/// instances. Scores are multiples of 1/8 so both sums are exact.
fn i_gate_sum_only(_: &HarnessConfig, rng: &mut SeededRng) -> Result<Trial> {
    let (inputs, params) = random_igdr(rng)?;
    let s = s_bev(&inputs);
    let (b, n, h, w) = s.dims4("gate_sum_only")?;
    let hw = h * w;
    let a = Tensor::from_fn(s.shape(), |_| rng.below(17) as f64 / 8.0);
    let mut other = Tensor::zeros(s.shape());
    for bi in 0..b {
        for px in 0..hw {
            let total: f64 = (0..n).map(|k| a.data()[(bi * n + k) * hw + px]).sum();
            let mut left = total;
            for k in 0..n {
                let v = if k + 1 == n { left } else { rng.below((left * 8.0) as usize + 1) as f64 / 8.0 };
                other.data_mut()[(bi * n + k) * hw + px] = v;
                left -= v;
            }
        }
    }
    let ga = foreground_gate(&a, &params)?;
    let gb = foreground_gate(&other, &params)?;
    Ok(Trial::new(ga.max_abs_diff(&gb), vec![("s_a", a), ("s_b", other)]))
}

fn i_gate_range(_: &HarnessConfig, rng: &mut SeededRng) -> Result<Trial> {
    let (inputs, params) = random_igdr(rng)?;
    let g = foreground_gate(s_bev(&inputs), &params)?;
    Ok(Trial::new(count(g.data().iter().map(|&v| !open_unit(v))), igdr_tensors(&inputs)))
}

pub fn properties() -> Vec<Property> {
    macro_rules! prop {
        ($name:expr, $tol:expr, $run:expr) => {
            Property { name: $name, tol: $tol, run: $run }
        };
    }
    vec![
        prop!("tensor.conv2d_matches_reference", 1e-10, t_conv_reference),
        prop!("tensor.softmax_normalized", 1e-12, t_softmax_normalized),
        prop!("tensor.softmax_shift_invariant", 1e-12, t_softmax_shift),
        prop!("tensor.sigmoid_open_unit", 0.0, t_sigmoid_range),
        prop!("tensor.bilinear_exact_at_integers", 0.0, t_bilinear_integer),
        prop!("tensor.bilinear_lipschitz", 1.0, t_bilinear_continuity),
        prop!("tensor.rten_roundtrip", 0.0, t_rten_roundtrip),
        prop!("pdf.edge_pair_contract", 0.0, p_edge_contract),
        prop!("pdf.global_pair_contract", 0.0, p_global_contract),
        prop!("pdf.flat_scene_no_pairs", 0.0, p_flat_no_pairs),
        prop!("pdf.sampling_deterministic", 0.0, p_sampling_deterministic),
        prop!("pdf.threshold_rule", 0.0, p_threshold_rule),
        prop!("pdf.dilated_ring_contract", 0.0, p_ring_contract),
        prop!("pdf.gaussian_target_normalized", 1e-12, p_gaussian_normalized),
        prop!("pdf.kl_matching_zero", 1e-9, p_kl_matching),
        prop!("pdf.kl_nonnegative", KL_FLOOR_SLACK, p_kl_nonnegative),
        prop!("pdf.pair_loss_zero_margin", 1e-12, p_pair_zero_margin),
        prop!("pdf.pair_loss_symmetric", 0.0, p_pair_symmetric),
        prop!("pdf.pair_loss_monotone", 0.0, p_pair_monotone),
        prop!("dgtf.degenerate_equivalence", 1e-10, d_degenerate),
        prop!("dgtf.gate_ranges", 0.0, d_gate_ranges),
        prop!("dgtf.blend_convexity_ulps", 4.0, d_blend_convexity),
        prop!("dgtf.shift_compensation", 1e-10, d_shift_compensation),
        prop!("igdr.assignment_normalized", 1e-12, i_assignment_normalized),
        prop!("igdr.assignment_shift_invariant", 1e-12, i_assignment_shift),
        prop!("igdr.fuse_convexity_ulps", 4.0, i_fuse_convexity),
        prop!("igdr.identity_at_init", 0.0, i_identity),
        prop!("igdr.passthrough_without_instances", 0.0, i_passthrough),
        prop!("igdr.gate_depends_on_sum", 0.0, i_gate_sum_only),
        prop!("igdr.gate_open_unit", 0.0, i_gate_range),
    ]
}

pub fn dump_trial(dir: &Path, trial: &Trial) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (name, t) in &trial.inputs {
        rten::write(dir.join(format!("{name}.rten")), t, Dtype::F64)?;
    }
    Ok(())
}

/// Runs one property. Returns its record and, if it failed, the smallest
/// failing trial by total input size.
pub fn run_property(prop: &Property, cfg: &HarnessConfig, seed: u64, trials: usize) -> Result<(CheckRecord, Option<Trial>)> {
    let mut rng = SeededRng::derive(seed, stream_id(prop.name));
    let (result, ms) = timed(|| -> Result<(f64, Option<Trial>)> {
        let mut worst: f64 = 0.0;
        let mut smallest: Option<Trial> = None;
        for _ in 0..trials {
            let trial = (prop.run)(cfg, &mut rng)?;
            let v = if trial.value.is_nan() { f64::INFINITY } else { trial.value };
            worst = worst.max(v);
            if v > prop.tol {
                let size = |t: &Trial| t.inputs.iter().map(|(_, x)| x.len()).sum::<usize>();
                if smallest.as_ref().is_none_or(|s| size(&trial) < size(s)) {
                    smallest = Some(trial);
                }
            }
        }
        Ok((worst, smallest))
    });
    let (worst, failing) = result?;
    Ok((CheckRecord::at_most(prop.name, worst, prop.tol, ms), failing))
}

/// Runs every property of `suite` (`"all"` for every suite). Failing
/// inputs go under `dump_dir` when one is given.
pub fn run_props(suite: &str, cfg: &HarnessConfig, seed: u64, trials: usize, dump_dir: Option<&Path>) -> Result<CheckReport> {
    if !SUITES.contains(&suite) {
        return Err(Error::invalid("run_props", format!("unknown suite `{suite}`; valid suites: {}", SUITES.join(", "))));
    }
    let mut report = CheckReport::new(format!("props:{suite}"), seed, cfg.to_json());
    if trials == 0 {
        return Ok(report);
    }
    for prop in properties() {
        if suite != "all" && prop.name.split('.').next() != Some(suite) {
            continue;
        }
        let (record, failing) = run_property(&prop, cfg, seed, trials)?;
        if let (Some(dir), Some(trial)) = (dump_dir, &failing) {
            dump_trial(&dir.join(prop.name), trial)?;
        }
        report.push(record);
    }
    Ok(report)
}
