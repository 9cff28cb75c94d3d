mod common;

use bevkit::dgtf::{dgtf_step, dgtf_step_traced, run_sequence, DgtfParams, DgtfState};
use bevkit::igdr::{
    broadcast_prototypes, gen_affine, igdr_forward, pool_project, softmax_assign, IgdrInputs, IgdrParams,
};
use bevkit::ops::{conv2d, global_avg_pool};
use bevkit::pdf::{expected_depth, DepthBinSpec};
use bevkit::{SeededRng, Tensor};

use common::{conv_loop, dgtf_step_reference, igdr_reference, max_abs_diff};

const TOL: f64 = 1e-12;

#[test]
fn conv2d_matches_six_loops() {
    let mut rng = SeededRng::new(1);
    let input = rng.normal_tensor(&[2, 3, 5, 5], 1.0);
    let kernel = rng.normal_tensor(&[4, 3, 3, 3], 1.0);
    let bias = rng.normal_tensor(&[4], 1.0);
    for pad in [0, 1, 2] {
        let got = conv2d(&input, &kernel, &bias, (pad, pad)).unwrap();
        assert!(max_abs_diff(&got, &conv_loop(&input, &kernel, &bias, pad)) < TOL);
    }
}

#[test]
fn global_pool_matches_loop_mean() {
    let mut rng = SeededRng::new(2);
    let x = rng.normal_tensor(&[3, 7, 5, 9], 1.0);
    let got = global_avg_pool(&x).unwrap();
    for n in 0..3 {
        for c in 0..7 {
            let mut s = 0.0;
            for y in 0..5 {
                for xx in 0..9 {
                    s += x.at(&[n, c, y, xx]);
                }
            }
            assert!((got.at(&[n, c]) - s / 45.0).abs() < TOL);
        }
    }
}

#[test]
fn expected_depth_matches_loop() {
    let mut rng = SeededRng::new(3);
    let bins = DepthBinSpec::new(1.0, 20.0, 12).unwrap();
    let logits = rng.normal_tensor(&[2, 12, 3, 4], 1.0);
    let prob = bevkit::ops::softmax(&logits, 1, 1.0).unwrap();
    let got = expected_depth(&prob, &bins).unwrap();
    let width = 19.0 / 12.0;
    for b in 0..2 {
        for y in 0..3 {
            for x in 0..4 {
                let mut e = 0.0;
                for k in 0..12 {
                    e += prob.at(&[b, k, y, x]) * (1.0 + (k as f64 + 0.5) * width);
                }
                assert!((got.at(&[b, y, x]) - e).abs() < TOL);
            }
        }
    }
}

#[test]
fn prototype_stages_match_loops() {
    let mut rng = SeededRng::new(4);
    let (n, c, ci) = (3, 2, 4);
    let params = IgdrParams::random(c, ci, 0.5, &mut rng);
    let f_rc = rng.normal_tensor(&[1, c, 5, 6], 1.0);
    let e = rng.normal_tensor(&[n, ci, 3, 4], 1.0);
    let s = rng.uniform_tensor(&[1, n, 5, 6], 0.0, 3.0);
    let want = igdr_reference(&f_rc, &e, &s, 0.7, &params);

    let e_proj = pool_project(&e, &params, 1).unwrap();
    assert_eq!(e_proj.shape(), &[1, n, ci]);
    for (a, b) in e_proj.data().iter().zip(&want.e_proj) {
        assert!((a - b).abs() < TOL);
    }
    let a_prob = softmax_assign(&s, 0.7).unwrap();
    assert!(max_abs_diff(&a_prob, &want.a_prob) < TOL);
    let e_bev = broadcast_prototypes(&a_prob, &e_proj).unwrap();
    assert!(max_abs_diff(&e_bev, &want.e_bev) < TOL);
    let (gamma, beta) = gen_affine(&e_bev, &params).unwrap();
    assert!(max_abs_diff(&gamma, &want.gamma) < TOL);
    assert!(max_abs_diff(&beta, &want.beta) < TOL);
}

#[test]
fn temporal_step_matches_transliteration() {
    for (seed, c, groups) in [(10, 2, 1), (11, 4, 2), (12, 3, 3), (13, 1, 1)] {
        let mut rng = SeededRng::new(seed);
        let params = DgtfParams::random(c, 3, groups, 0.4, &mut rng).unwrap();
        let x = rng.normal_tensor(&[2, c, 6, 7], 1.0);
        let h = rng.normal_tensor(&[2, c, 6, 7], 1.0);
        for prev in [None, Some(&h)] {
            let state = prev.map_or_else(DgtfState::new, |h| DgtfState::with_hidden(h.clone()));
            let trace = dgtf_step_traced(&x, &state, &params).unwrap();
            let want = dgtf_step_reference(&x, prev, &params);
            assert!(max_abs_diff(&trace.offsets.delta, &want.delta) < TOL);
            assert!(max_abs_diff(&trace.offsets.mask, &want.mask) < TOL);
            assert!(max_abs_diff(&trace.aligned, &want.aligned) < TOL);
            assert!(max_abs_diff(trace.hidden(), &want.hidden) < TOL);
            assert!(max_abs_diff(&trace.f_rc, &want.f_rc) < TOL);
        }
    }
}

#[test]
fn sequence_threads_reference_hidden_state() {
    let mut rng = SeededRng::new(20);
    let params = DgtfParams::random(2, 3, 1, 0.4, &mut rng).unwrap();
    let frames: Vec<Tensor> = (0..4).map(|_| rng.normal_tensor(&[1, 2, 5, 5], 1.0)).collect();
    let got = run_sequence(&frames, 1, &params).unwrap();
    let mut hidden: Option<Tensor> = None;
    for (t, x) in frames.iter().enumerate() {
        let step = dgtf_step_reference(x, hidden.as_ref(), &params);
        assert!(max_abs_diff(&got[t], &step.f_rc) < TOL, "frame {t}");
        hidden = Some(step.hidden);
    }
    let (single, _) = dgtf_step(&frames[0], &DgtfState::new(), &params).unwrap();
    assert_eq!(run_sequence(&frames[..1], 1, &params).unwrap()[0], single);
}

#[test]
fn refinement_matches_transliteration() {
    for seed in 30..35 {
        let mut rng = SeededRng::new(seed);
        let (n, c, ci) = (1 + seed as usize % 4, 3, 2);
        let params = IgdrParams::random(c, ci, 0.6, &mut rng);
        let f_rc = rng.normal_tensor(&[1, c, 6, 5], 1.0);
        let e = rng.normal_tensor(&[n, ci, 2, 3], 1.0);
        let s = rng.uniform_tensor(&[1, n, 6, 5], 0.0, 2.0);
        let out = igdr_forward(&IgdrInputs::new(f_rc.clone(), e.clone(), s.clone(), 1.3).unwrap(), &params).unwrap();
        let want = igdr_reference(&f_rc, &e, &s, 1.3, &params);
        let m = out.intermediates.as_ref().unwrap();
        assert!(max_abs_diff(&m.g_bg, &want.gate) < TOL);
        assert!(max_abs_diff(&out.f_final, &want.f_final) < TOL);
    }
}
