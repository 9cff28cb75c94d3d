mod common;

use proptest::prelude::*;

use bevkit::dgtf::{dcn_align, gated_update_traced, DgtfParams, Offsets};
use bevkit::igdr::{foreground_gate, gated_fuse, softmax_assign, IgdrParams};
use bevkit::ops::{bilinear_sample, conv2d, sigmoid, softmax};
use bevkit::pdf::{
    dilated_ring, gaussian_target, kl_prob_loss, pair_rank_loss, sample_edge_pairs, sample_global_pairs,
    DepthBinSpec, DepthSupervisionBatch, RankingConfig,
};
use bevkit::rten::{self, Dtype};
use bevkit::{SeededRng, Tensor};

use common::{conv_loop, max_abs_diff};

fn config() -> ProptestConfig {
    ProptestConfig {
        cases: 128,
        failure_persistence: None,
        ..ProptestConfig::default()
    }
}

fn sums_over_axis1(t: &Tensor) -> Vec<f64> {
    let s = t.shape();
    let (n, k, rest) = (s[0], s[1], s[2..].iter().product::<usize>());
    let mut out = vec![0.0; n * rest];
    for a in 0..n {
        for j in 0..k {
            for r in 0..rest {
                out[a * rest + r] += t.data()[(a * k + j) * rest + r];
            }
        }
    }
    out
}

/// Elementwise `min(a, b) <= out <= max(a, b)`, up to 4 ulps of rounding.
fn within_hull(out: &Tensor, a: &Tensor, b: &Tensor) -> bool {
    out.data().iter().enumerate().all(|(i, &v)| {
        let (lo, hi) = (a.data()[i].min(b.data()[i]), a.data()[i].max(b.data()[i]));
        let slack = 4.0 * f64::EPSILON * lo.abs().max(hi.abs());
        v >= lo - slack && v <= hi + slack
    })
}

/// A batch whose prediction is random and whose sparse depths are drawn in range.
fn kl_batch(rng: &mut SeededRng, bins: &DepthBinSpec, matching: Option<f64>) -> DepthSupervisionBatch {
    let (h, w, d) = (3, 4, bins.count());
    let depth = Tensor::from_fn(&[1, h, w], |_| rng.uniform_in(bins.d_min(), bins.d_max()));
    let mask = Tensor::from_fn(&[1, h, w], |i| if i % 3 == 0 || rng.uniform() < 0.5 { 1.0 } else { 0.0 });
    let prob = match matching {
        Some(sigma) => {
            let mut p = Tensor::zeros(&[1, d, h, w]);
            for px in 0..h * w {
                let g = gaussian_target(depth.data()[px], bins, sigma).unwrap();
                for k in 0..d {
                    p.data_mut()[k * h * w + px] = g.data()[k];
                }
            }
            p
        }
        None => softmax(&rng.normal_tensor(&[1, d, h, w], 2.0), 1, 1.0).unwrap(),
    };
    DepthSupervisionBatch::new(prob, depth.clone(), mask, depth, Tensor::ones(&[1, h, w]), None).unwrap()
}

proptest! {
    #![proptest_config(config())]

    #[test]
    fn conv2d_agrees_with_loops(seed: u64, b in 1usize..3, c in 1usize..5, o in 1usize..5,
                                h in 1usize..9, w in 1usize..9, k in prop::sample::select(vec![1usize, 3, 5]), pad in 0usize..3) {
        prop_assume!(h + 2 * pad >= k && w + 2 * pad >= k);
        let mut rng = SeededRng::new(seed);
        let x = rng.uniform_tensor(&[b, c, h, w], -2.0, 2.0);
        let kern = rng.uniform_tensor(&[o, c, k, k], -2.0, 2.0);
        let bias = rng.uniform_tensor(&[o], -2.0, 2.0);
        let got = conv2d(&x, &kern, &bias, (pad, pad)).unwrap();
        prop_assert!(max_abs_diff(&got, &conv_loop(&x, &kern, &bias, pad)) < 1e-10);
    }

    #[test]
    fn softmax_normalised_and_shift_invariant(seed: u64, n in 1usize..4, k in 1usize..9, m in 1usize..6,
                                              tau in 0.05f64..5.0, shift in -50.0f64..50.0) {
        let mut rng = SeededRng::new(seed);
        let x = rng.normal_tensor(&[n, k, m], 3.0);
        let p = softmax(&x, 1, tau).unwrap();
        prop_assert!(p.data().iter().all(|&v| v >= 0.0));
        prop_assert!(sums_over_axis1(&p).iter().all(|s| (s - 1.0).abs() <= 1e-12));
        let shifted = Tensor::from_fn(x.shape(), |i| x.data()[i] + shift + ((i % m) as f64));
        let offset_by_pixel = Tensor::from_fn(x.shape(), |i| x.data()[i] + ((i % m) as f64));
        let a = softmax(&shifted, 1, tau).unwrap();
        let b = softmax(&offset_by_pixel, 1, tau).unwrap();
        prop_assert!(max_abs_diff(&a, &b) <= 1e-12);
    }

    #[test]
    fn bilinear_exact_on_grid_and_lipschitz(seed: u64, c in 1usize..4, h in 1usize..8, w in 1usize..8,
                                            y in -2.0f64..9.0, x in -2.0f64..9.0, ey in -1e-6f64..1e-6, ex in -1e-6f64..1e-6) {
        let mut rng = SeededRng::new(seed);
        let f = rng.uniform_tensor(&[c, h, w], -2.0, 2.0);
        let (iy, ix) = (rng.below(h), rng.below(w));
        let at = bilinear_sample(&f, iy as f64, ix as f64).unwrap();
        for ch in 0..c {
            prop_assert_eq!(at.data()[ch], f.at(&[ch, iy, ix]));
        }
        let a = bilinear_sample(&f, y, x).unwrap();
        let b = bilinear_sample(&f, y + ey, x + ex).unwrap();
        let bound = 4.0 * ey.abs().max(ex.abs()) * f.max_abs() + 1e-15;
        prop_assert!(max_abs_diff(&a, &b) <= bound);
    }

    #[test]
    fn gaussian_target_sums_to_one(d in 1.0f64..70.0, sigma in 0.01f64..20.0) {
        let g = gaussian_target(d, &DepthBinSpec::default(), sigma).unwrap();
        prop_assert!((g.sum() - 1.0).abs() < 1e-12);
        prop_assert!(g.data().iter().all(|&v| v > 0.0));
    }

    #[test]
    fn kl_bounded_below_and_zero_on_match(seed: u64, count in 2usize..20, sigma_bins in 0.3f64..3.0) {
        let bins = DepthBinSpec::new(1.0, 1.0 + count as f64, count).unwrap();
        let sigma = sigma_bins * bins.width();
        let mut rng = SeededRng::new(seed);
        let kl = kl_prob_loss(&kl_batch(&mut rng, &bins, None), &bins, sigma).unwrap().value;
        prop_assert!(kl >= -1e-9);
        let matched = kl_prob_loss(&kl_batch(&mut rng, &bins, Some(sigma)), &bins, sigma).unwrap().value;
        prop_assert!(matched.abs() <= 1e-9);
    }

    #[test]
    fn pair_loss_symmetric_and_monotone(di in -50.0f64..50.0, dj in -50.0f64..50.0,
                                        gi in 1.0f64..70.0, gj in 1.0f64..70.0, step in 1e-3f64..5.0) {
        prop_assume!(gi != gj);
        prop_assert_eq!(pair_rank_loss(di, dj, gi, gj), pair_rank_loss(dj, di, gj, gi));
        let s = if gi > gj { 1.0 } else { -1.0 };
        let better = pair_rank_loss(di + s * step, dj, gi, gj);
        prop_assert!(better < pair_rank_loss(di, dj, gi, gj) || better == 0.0);
    }

    #[test]
    fn ring_is_chebyshev_band(seed: u64, h in 1usize..12, w in 1usize..12, r in 1usize..4, density in 0.0f64..0.4) {
        let mut rng = SeededRng::new(seed);
        let mask = Tensor::from_fn(&[h, w], |_| if rng.uniform() < density { 1.0 } else { 0.0 });
        let ring = dilated_ring(&mask, r).unwrap();
        for y in 0..h {
            for x in 0..w {
                let mut dist = usize::MAX;
                for yy in 0..h {
                    for xx in 0..w {
                        if mask.at(&[yy, xx]) == 1.0 {
                            dist = dist.min(y.abs_diff(yy).max(x.abs_diff(xx)));
                        }
                    }
                }
                prop_assert_eq!(ring.at(&[y, x]) == 1.0, (1..=r).contains(&dist));
            }
        }
    }

    #[test]
    fn sampling_is_a_pure_function_of_the_seed(seed: u64, rng_seed: u64) {
        let mut rng = SeededRng::new(seed);
        let (h, w) = (10, 12);
        let dense = Tensor::from_fn(&[1, h, w], |_| rng.uniform_in(1.0, 60.0));
        let masks = Tensor::from_fn(&[1, 2, h, w], |_| if rng.uniform() < 0.2 { 1.0 } else { 0.0 });
        let prob = Tensor::full(&[1, 4, h, w], 0.25);
        let batch = DepthSupervisionBatch::new(prob, dense.clone(), Tensor::ones(&[1, h, w]), dense,
                                               Tensor::ones(&[1, h, w]), Some(masks)).unwrap();
        let cfg = RankingConfig { rng_seed, n_edge_pairs: 32, n_global_pairs: 32, ..RankingConfig::default() };
        let draw = || {
            let mut s = SeededRng::new(cfg.rng_seed);
            (sample_edge_pairs(&batch, &cfg, &mut s).unwrap(), sample_global_pairs(&batch, &cfg, &mut s).unwrap())
        };
        prop_assert_eq!(draw(), draw());
    }

    #[test]
    fn plain_grid_deformable_equals_conv(seed: u64, c in 1usize..5, h in 1usize..11, w in 1usize..11) {
        let mut rng = SeededRng::new(seed);
        let groups = if c % 2 == 0 { 2 } else { 1 };
        let p = DgtfParams::random(c, 3, groups, 2.0, &mut rng).unwrap();
        let x = rng.uniform_tensor(&[1, c, h, w], -2.0, 2.0);
        let off = Offsets { delta: Tensor::zeros(&[1, 18 * groups, h, w]), mask: Tensor::ones(&[1, 9 * groups, h, w]) };
        let got = dcn_align(&x, &off, &p).unwrap();
        prop_assert!(max_abs_diff(&got, &conv_loop(&x, &p.dcn.weight, &p.dcn.bias, 1)) < 1e-10);
    }

    #[test]
    fn gates_in_range_and_blend_convex(seed: u64, c in 1usize..4, h in 1usize..8, w in 1usize..8, scale in 0.1f64..3.0) {
        let mut rng = SeededRng::new(seed);
        let p = DgtfParams::random(c, 3, 1, scale, &mut rng).unwrap();
        let x = rng.uniform_tensor(&[1, c, h, w], -2.0, 2.0);
        let a = rng.uniform_tensor(&[1, c, h, w], -2.0, 2.0);
        let tr = gated_update_traced(&x, &a, &p).unwrap();
        let open = |t: &Tensor, lo: f64, hi: f64| t.data().iter().all(|&v| v > lo && v < hi);
        prop_assert!(open(&tr.reset, 0.0, 1.0) && open(&tr.update, 0.0, 1.0));
        prop_assert!(tr.candidate.data().iter().all(|&v| v.abs() <= 1.0));
        prop_assert!(within_hull(&tr.output, &x, &tr.candidate));
    }

    #[test]
    fn assignment_normalised_and_shift_invariant(seed: u64, n in 1usize..6, tau in 0.1f64..4.0) {
        let mut rng = SeededRng::new(seed);
        let s = rng.uniform_tensor(&[1, n, 4, 5], 0.0, 5.0);
        let a = softmax_assign(&s, tau).unwrap();
        prop_assert!(sums_over_axis1(&a).iter().all(|v| (v - 1.0).abs() <= 1e-12));
        let bump: Vec<f64> = (0..20).map(|_| rng.uniform_in(0.0, 3.0)).collect();
        let shifted = Tensor::from_fn(s.shape(), |i| s.data()[i] + bump[i % 20]);
        prop_assert!(max_abs_diff(&softmax_assign(&shifted, tau).unwrap(), &a) <= 1e-12);
    }

    #[test]
    fn fuse_convex_and_gate_depends_on_sum(seed: u64, n in 2usize..5, c in 1usize..4) {
        let mut rng = SeededRng::new(seed);
        let params = IgdrParams::random(c, 2, 1.0, &mut rng);
        let f = rng.uniform_tensor(&[1, c, 4, 4], -2.0, 2.0);
        let cal = rng.uniform_tensor(&[1, c, 4, 4], -2.0, 2.0);
        // Dyadic scores keep every partial sum exact.
        let s = Tensor::from_fn(&[1, n, 4, 4], |_| rng.below(32) as f64 / 8.0);
        let g = foreground_gate(&s, &params).unwrap();
        prop_assert!(g.data().iter().all(|&v| v > 0.0 && v < 1.0));
        prop_assert!(within_hull(&gated_fuse(&f, &cal, &g).unwrap(), &f, &cal));
        let mut moved = s.clone();
        for px in 0..16 {
            let total: f64 = (0..n).map(|k| s.data()[k * 16 + px]).sum();
            for k in 0..n {
                moved.data_mut()[k * 16 + px] = if k == px % n { total } else { 0.0 };
            }
        }
        prop_assert_eq!(foreground_gate(&moved, &params).unwrap(), g);
    }

    #[test]
    fn sigmoid_stays_in_open_unit_interval(x in -800.0f64..800.0) {
        let v = sigmoid(&Tensor::scalar(x)).item();
        prop_assert!(v > 0.0 && v < 1.0);
    }

    #[test]
    fn rten_round_trips(seed: u64, dims in prop::collection::vec(1usize..5, 1..6)) {
        let t = SeededRng::new(seed).normal_tensor(&dims, 10.0);
        let (back, dtype) = rten::decode(&rten::encode(&t, Dtype::F64)).unwrap();
        prop_assert_eq!(dtype, Dtype::F64);
        prop_assert_eq!(back, t.clone());
        let (narrow, _) = rten::decode(&rten::encode(&t, Dtype::F32)).unwrap();
        for (a, b) in narrow.data().iter().zip(t.data()) {
            prop_assert_eq!(*a, *b as f32 as f64);
        }
    }
}
