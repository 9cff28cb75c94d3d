//! Combined depth loss on the canonical synthetic scene, for a perfect
//! prediction and for a uniform one, under each weight setting.
//!
//! ```text
//! cargo run --example depth_loss
//! ```

use bevkit::pdf::{default_sigma, total_depth_loss_backward, DepthBinSpec, DepthLossWeights, RankingConfig, DEFAULT_BETA};
use bevkit::synth::{make_depth_scene, SceneSpec};
use bevkit::{SeededRng, Tensor};

fn main() -> bevkit::Result<()> {
    let bins = DepthBinSpec::default();
    let sigma = default_sigma(&bins);
    let scene = make_depth_scene(&SceneSpec::canonical(), &bins)?;
    let perfect = scene.perfect_prediction(&bins, sigma)?;
    let uniform = Tensor::full(perfect.shape(), 1.0 / bins.count() as f64);
    let cfg = RankingConfig::default();

    for (label, prob) in [("perfect", perfect), ("uniform", uniform)] {
        let batch = scene.batch(prob)?;
        for (setting, w) in [
            ("A", DepthLossWeights::SETTING_A),
            ("B", DepthLossWeights::SETTING_B),
            ("C", DepthLossWeights::SETTING_C),
        ] {
            let mut rng = SeededRng::new(cfg.rng_seed);
            let (r, grad) = total_depth_loss_backward(&batch, &bins, &cfg, &w, sigma, DEFAULT_BETA, &mut rng)?;
            println!(
                "{label:>7} {setting}: total {:.3e}  prob {:.3e}  abs {:.4}  dense {:.4}  rel {:.4}  pairs {}/{}  |grad| {:.3e}",
                r.l_depth,
                r.l_prob,
                r.l_abs,
                r.l_dense,
                r.l_relative,
                r.n_edge_pairs_used,
                r.n_global_pairs_used,
                grad.max_abs()
            );
        }
    }
    Ok(())
}
