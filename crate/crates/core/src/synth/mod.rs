//! Seeded synthetic ground truth: depth scenes, moving BEV features and
//! instance score maps.

mod instances;
mod motion;
mod scene;

pub use instances::{make_instance_bev, InstanceBev};
pub use motion::{
    make_moving_bev, shift_feature, smooth_field, BaseFeature, MotionSpec, MotionSpecFile, MovingBev, MAX_SHIFT,
};
pub use scene::{make_depth_scene, DepthScene, Layer, Rect, Region, SceneSpec};

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pdf::DepthBinSpec;
    use crate::tensor::Tensor;

    fn plane(depth: f64) -> SceneSpec {
        SceneSpec {
            width: 8,
            height: 6,
            background_planes: vec![Layer {
                region: Region::Full,
                depth,
            }],
            objects: vec![],
            sparse_fraction: 0.5,
            noise_sigma: 0.0,
            seed: 1,
        }
    }

    #[test]
    fn single_plane_is_constant() {
        let s = make_depth_scene(&plane(10.0), &DepthBinSpec::default()).unwrap();
        assert!(s.d_dense.data().iter().all(|&d| d == 10.0));
        assert_eq!(s.mask_sparse.sum(), 24.0);
        assert!(s.instance_masks.is_none());
    }

    #[test]
    fn uncovered_pixels_rejected() {
        let mut spec = plane(10.0);
        spec.background_planes[0].region = Region::Rect(Rect {
            top: 0,
            left: 0,
            bottom: 3,
            right: 8,
        });
        assert!(make_depth_scene(&spec, &DepthBinSpec::default()).is_err());
    }

    #[test]
    fn scene_is_seed_deterministic() {
        let bins = DepthBinSpec::default();
        let mut spec = SceneSpec::canonical();
        spec.noise_sigma = 0.3;
        assert_eq!(make_depth_scene(&spec, &bins).unwrap(), make_depth_scene(&spec, &bins).unwrap());
    }

    #[test]
    fn scene_spec_json_round_trip() {
        let spec = SceneSpec::canonical();
        let text = serde_json::to_string(&spec).unwrap();
        assert_eq!(serde_json::from_str::<SceneSpec>(&text).unwrap(), spec);
    }

    #[test]
    fn static_motion_repeats_frames() {
        let spec = MotionSpec {
            base_feature: smooth_field(&[1, 2, 6, 6], 3).unwrap(),
            shift: (0, 0),
            n_frames: 3,
            noise_sigma: 0.0,
            seed: 0,
        };
        let m = make_moving_bev(&spec).unwrap();
        assert_eq!(m.frames[0], m.frames[2]);
    }

    #[test]
    fn unit_shift_moves_rows() {
        let base = Tensor::from_fn(&[1, 1, 5, 5], |i| i as f64 + 1.0);
        let s = shift_feature(&base, 1, 0).unwrap();
        for y in 1..5 {
            for x in 0..5 {
                assert_eq!(s.at(&[0, 0, y, x]), base.at(&[0, 0, y - 1, x]));
            }
        }
        assert!((0..5).all(|x| s.at(&[0, 0, 0, x]) == 0.0));
    }

    #[test]
    fn motion_file_with_smooth_base() {
        let json = r#"{"base":{"kind":"smooth","shape":[1,2,8,8],"seed":5},"shift":[1,0],"n_frames":3,"noise_sigma":0.05,"seed":42}"#;
        let file: MotionSpecFile = serde_json::from_str(json).unwrap();
        let spec = MotionSpec::from_file(&file).unwrap();
        assert_eq!(spec.base_feature.shape(), &[1, 2, 8, 8]);
        let bad = MotionSpecFile { shift: (5, 0), ..file };
        assert!(MotionSpec::from_file(&bad).is_err());
    }

    #[test]
    fn full_box_without_jitter_covers_grid() {
        let b = Rect {
            top: 0,
            left: 0,
            bottom: 4,
            right: 5,
        };
        let inst = make_instance_bev(&[b], &[1.0], (4, 5), 0, 9, (3, 2)).unwrap();
        assert!(inst.s_bev.data().iter().all(|&v| v == 1.0));
        assert_eq!(inst.boxes[0], b);
        assert_eq!(inst.e_features.shape(), &[1, 3, 2, 2]);
        assert!(make_instance_bev(&[], &[], (4, 5), 0, 9, (3, 2)).is_err());
    }
}
