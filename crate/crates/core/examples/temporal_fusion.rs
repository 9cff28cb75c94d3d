//! Runs the temporal fusion cell over a translating BEV feature and prints
//! what each frame sees: the predicted offsets, the mask and the update gate.
//!
//! ```text
//! cargo run --example temporal_fusion
//! ```

use bevkit::dgtf::{run_sequence_traced, DgtfParams};
use bevkit::synth::{make_moving_bev, smooth_field, MotionSpec};
use bevkit::SeededRng;

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn main() -> bevkit::Result<()> {
    let spec = MotionSpec {
        base_feature: smooth_field(&[1, 4, 16, 16], 3)?,
        shift: (0, 1),
        n_frames: 6,
        noise_sigma: 0.05,
        seed: 11,
    };
    let seq = make_moving_bev(&spec)?;
    let params = DgtfParams::random(4, 3, 2, 0.1, &mut SeededRng::new(5))?;
    for gap in [1, 2] {
        println!("frame gap {gap}");
        for (t, tr) in run_sequence_traced(&seq.frames, gap, &params)?.iter().enumerate() {
            println!(
                "  t={t} bootstrap={:<5} |offset| {:.3}  mask {:.3}  update gate {:.3}  |F_RC| {:.3}",
                tr.bootstrap,
                tr.offsets.delta.max_abs(),
                mean(tr.offsets.mask.data()),
                mean(tr.gates.update.data()),
                tr.f_rc.max_abs()
            );
        }
    }
    Ok(())
}
