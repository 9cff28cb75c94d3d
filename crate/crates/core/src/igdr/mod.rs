//! Instance-guided dynamic refinement.
//!
//! Per-instance prototypes are pooled from RoI features, spread over the BEV
//! grid by a softmax over instance scores, and turned into per-location scale
//! and shift maps. The calibrated feature is blended back into the input
//! through a gate driven by total instance occupancy.

mod forward;
mod ops;
mod params;

pub use forward::{igdr_backward, igdr_forward, IgdrGrads, IgdrInputs, IgdrOutput, Instances, Intermediates, DEFAULT_TEMPERATURE};
pub use ops::{
    broadcast_prototypes, broadcast_prototypes_backward, calibrate, calibrate_backward, foreground_gate,
    foreground_gate_backward, gated_fuse, gated_fuse_backward, gen_affine, gen_affine_backward, pool_project,
    pool_project_backward, softmax_assign, softmax_assign_backward, AffineGrads, PoolProjectGrads,
};
pub use params::IgdrParams;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;
    use crate::tensor::Tensor;

    fn random_inputs(rng: &mut SeededRng, b: usize, n: usize, c: usize, ci: usize) -> IgdrInputs {
        IgdrInputs::new(
            rng.normal_tensor(&[b, c, 5, 4], 1.0),
            rng.normal_tensor(&[n, ci, 3, 3], 1.0),
            rng.uniform_tensor(&[b, n, 5, 4], 0.0, 2.0),
            1.0,
        )
        .unwrap()
    }

    #[test]
    fn identity_params_are_exact_identity() {
        let mut rng = SeededRng::new(3);
        let inputs = random_inputs(&mut rng, 2, 3, 2, 4);
        let out = igdr_forward(&inputs, &IgdrParams::identity(2, 4)).unwrap();
        assert_eq!(out.f_final, inputs.f_rc);
        let m = out.intermediates.unwrap();
        assert!(m.g_bg.data().iter().all(|&g| g == 0.5));
        assert!(m.gamma.data().iter().all(|&g| g == 1.0));
    }

    #[test]
    fn no_instances_passes_through() {
        let f = Tensor::from_fn(&[1, 2, 3, 3], |i| i as f64);
        let out = igdr_forward(&IgdrInputs::without_instances(f.clone(), 1.0), &IgdrParams::identity(2, 4)).unwrap();
        assert!(out.passthrough());
        assert_eq!(out.f_final, f);
    }

    #[test]
    fn constant_roi_with_identity_projection() {
        let p = IgdrParams::identity(1, 3);
        let e = pool_project(&Tensor::full(&[2, 3, 4, 4], 0.7), &p, 2).unwrap();
        assert_eq!(e.shape(), &[2, 2, 3]);
        assert!(e.data().iter().all(|&v| (v - 0.7).abs() < 1e-15));
    }

    #[test]
    fn softmax_assign_sharp_temperature() {
        let s = Tensor::new(vec![1, 2, 1, 1], vec![1.0, 0.0]).unwrap();
        let a = softmax_assign(&s, 0.1).unwrap();
        assert!(a.data()[0] > 0.9999);
        assert!(softmax_assign(&s, 0.0).is_err());
    }

    #[test]
    fn single_instance_replicates_prototype() {
        let a = Tensor::ones(&[1, 1, 2, 2]);
        let e = Tensor::new(vec![1, 1, 3], vec![1.0, -2.0, 3.0]).unwrap();
        let out = broadcast_prototypes(&a, &e).unwrap();
        for c in 0..3 {
            for p in 0..4 {
                assert_eq!(out.data()[c * 4 + p], e.data()[c]);
            }
        }
    }

    #[test]
    fn calibrate_and_fuse_arithmetic() {
        let f = Tensor::full(&[1, 1, 1, 1], 0.5);
        let out = calibrate(&f, &Tensor::full(&[1, 1, 1, 1], 2.0), &Tensor::full(&[1, 1, 1, 1], -1.0)).unwrap();
        assert_eq!(out.item(), 0.0);
        let fused = gated_fuse(&Tensor::full(&[1, 2, 1, 1], 1.0), &Tensor::full(&[1, 2, 1, 1], 3.0), &Tensor::full(&[1, 1, 1, 1], 0.5)).unwrap();
        assert!(fused.data().iter().all(|&v| v == 2.0));
    }

    #[test]
    fn gate_saturates_with_negative_bias() {
        let mut p = IgdrParams::identity(1, 1);
        p.conv_gate.bias.data_mut()[0] = -20.0;
        let g = foreground_gate(&Tensor::zeros(&[1, 2, 3, 3]), &p).unwrap();
        assert!(g.data().iter().all(|&v| v < 1e-8 && v > 0.0));
    }

    #[test]
    fn params_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = IgdrParams::random(2, 3, 0.5, &mut SeededRng::new(9));
        p.save(dir.path()).unwrap();
        assert_eq!(IgdrParams::load(dir.path()).unwrap(), p);
    }
}
