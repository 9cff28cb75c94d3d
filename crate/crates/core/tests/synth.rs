use bevkit::igdr::softmax_assign;
use bevkit::pdf::DepthBinSpec;
use bevkit::synth::{
    make_depth_scene, make_instance_bev, make_moving_bev, smooth_field, Layer, MotionSpec, Rect, Region, SceneSpec,
};

fn wide_scene(noise_sigma: f64, seed: u64) -> SceneSpec {
    SceneSpec {
        width: 160,
        height: 100,
        background_planes: vec![Layer { region: Region::Full, depth: 35.0 }],
        objects: vec![Layer {
            region: Region::Ellipse { cy: 50.0, cx: 80.0, ry: 20.0, rx: 30.0 },
            depth: 20.0,
        }],
        sparse_fraction: 1.0,
        noise_sigma,
        seed,
    }
}

#[test]
fn sparse_noise_stays_within_six_sigma() {
    let sigma = 0.5;
    let bins = DepthBinSpec::default();
    let s = make_depth_scene(&wide_scene(sigma, 17), &bins).unwrap();
    assert!(s.d_dense.all_finite());
    let eps: Vec<f64> = s
        .d_sparse
        .data()
        .iter()
        .zip(s.d_dense.data())
        .zip(s.mask_sparse.data())
        .filter(|(_, &m)| m == 1.0)
        .map(|((a, b), _)| a - b)
        .collect();
    assert!(eps.len() >= 10_000);
    assert!(eps.iter().all(|e| e.abs() < 6.0 * sigma));
    let mean = eps.iter().sum::<f64>() / eps.len() as f64;
    let sd = (eps.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / eps.len() as f64).sqrt();
    assert!((sd / sigma - 1.0).abs() < 0.05, "sample sd {sd}");
}

#[test]
fn sparse_subset_has_floor_fraction_size() {
    let mut spec = wide_scene(0.0, 2);
    spec.sparse_fraction = 0.37;
    let s = make_depth_scene(&spec, &DepthBinSpec::default()).unwrap();
    let n = s.mask_sparse.data().iter().filter(|&&m| m == 1.0).count();
    assert_eq!(n, (0.37f64 * 16_000.0).floor() as usize);
    assert!(s.mask_dense.data().iter().all(|&m| m == 1.0));
}

#[test]
fn motion_noise_matches_requested_sigma() {
    let spec = MotionSpec {
        base_feature: smooth_field(&[1, 4, 50, 50], 1).unwrap(),
        shift: (1, -1),
        n_frames: 3,
        noise_sigma: 0.1,
        seed: 9,
    };
    let seq = make_moving_bev(&spec).unwrap();
    let dev: Vec<f64> = seq
        .frames
        .iter()
        .zip(&seq.clean)
        .flat_map(|(f, c)| f.data().iter().zip(c.data()).map(|(a, b)| a - b).collect::<Vec<_>>())
        .collect();
    assert!(dev.len() >= 10_000);
    let sd = (dev.iter().map(|d| d * d).sum::<f64>() / dev.len() as f64).sqrt();
    assert!((sd / 0.1 - 1.0).abs() < 0.1, "sample sd {sd}");
}

#[test]
fn unit_shift_translates_rows() {
    let spec = MotionSpec {
        base_feature: smooth_field(&[1, 2, 8, 9], 4).unwrap(),
        shift: (1, 0),
        n_frames: 3,
        noise_sigma: 0.0,
        seed: 1,
    };
    let seq = make_moving_bev(&spec).unwrap();
    for t in 1..3 {
        for c in 0..2 {
            for y in 1..8 {
                for x in 0..9 {
                    assert_eq!(seq.frames[t].at(&[0, c, y, x]), seq.frames[t - 1].at(&[0, c, y - 1, x]));
                }
            }
        }
    }
}

#[test]
fn generators_are_bit_deterministic() {
    let bins = DepthBinSpec::default();
    let spec = wide_scene(0.3, 5);
    assert_eq!(make_depth_scene(&spec, &bins).unwrap(), make_depth_scene(&spec, &bins).unwrap());
    let motion = MotionSpec {
        base_feature: smooth_field(&[1, 2, 10, 10], 8).unwrap(),
        shift: (2, 1),
        n_frames: 4,
        noise_sigma: 0.2,
        seed: 6,
    };
    assert_eq!(make_moving_bev(&motion).unwrap(), make_moving_bev(&motion).unwrap());
    assert_eq!(smooth_field(&[1, 3, 7, 7], 3).unwrap(), smooth_field(&[1, 3, 7, 7], 3).unwrap());
    let boxes = [Rect { top: 1, left: 1, bottom: 5, right: 6 }];
    let a = make_instance_bev(&boxes, &[0.8], (10, 10), 2, 11, (3, 4)).unwrap();
    let b = make_instance_bev(&boxes, &[0.8], (10, 10), 2, 11, (3, 4)).unwrap();
    assert_eq!(a, b);
}

#[test]
fn disjoint_boxes_give_one_hot_assignment() {
    let boxes = [
        Rect { top: 0, left: 0, bottom: 4, right: 4 },
        Rect { top: 5, left: 6, bottom: 9, right: 10 },
    ];
    let inst = make_instance_bev(&boxes, &[3.0, 2.0], (10, 12), 0, 4, (2, 3)).unwrap();
    assert_eq!(inst.boxes, boxes);
    let a = softmax_assign(&inst.s_bev, 0.01).unwrap();
    for y in 0..10 {
        for x in 0..12 {
            for (n, b) in boxes.iter().enumerate() {
                if b.contains(y, x) {
                    assert!((a.at(&[0, n, y, x]) - 1.0).abs() < 1e-12);
                    assert!(a.at(&[0, 1 - n, y, x]) < 1e-12);
                }
            }
            if !boxes.iter().any(|b| b.contains(y, x)) {
                assert_eq!(a.at(&[0, 0, y, x]), 0.5);
            }
        }
    }
}

#[test]
fn jittered_boxes_stay_inside_and_patterns_follow_instance() {
    let boxes = [
        Rect { top: 0, left: 0, bottom: 3, right: 3 },
        Rect { top: 4, left: 4, bottom: 8, right: 8 },
    ];
    let both = make_instance_bev(&boxes, &[1.0, 1.0], (8, 8), 3, 21, (2, 3)).unwrap();
    for b in &both.boxes {
        assert!(b.top < b.bottom && b.left < b.right && b.bottom <= 8 && b.right <= 8);
    }
    let first = make_instance_bev(&boxes[..1], &[1.0], (8, 8), 0, 21, (2, 3)).unwrap();
    assert_eq!(&both.e_features.data()[..18], first.e_features.data());
}
