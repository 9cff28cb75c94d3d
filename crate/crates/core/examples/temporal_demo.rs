//! Oracle and trained temporal alignment on a motion file.
//!
//! ```text
//! cargo run --release --example temporal_demo [SPEC_JSON] [STEPS] [LR]
//! ```

use bevkit::harness::{demo_temporal, DemoMode, HarnessConfig, DEFAULT_SEED};
use bevkit::synth::MotionSpec;

fn main() -> bevkit::Result<()> {
    let mut args = std::env::args().skip(1);
    let path = args.next().unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/examples/data/motion_spec.json").into());
    let steps = args.next().and_then(|s| s.parse().ok()).unwrap_or(500);
    let cfg = HarnessConfig::default();
    let lr = args.next().and_then(|s| s.parse().ok()).unwrap_or(cfg.lr);
    let spec = MotionSpec::from_json_file(path.as_ref())?;

    let oracle = demo_temporal(&spec, DemoMode::Oracle, 0, lr, &cfg, DEFAULT_SEED)?;
    print!("{}", oracle.report.to_text());

    let trained = demo_temporal(&spec, DemoMode::Trained, steps, lr, &cfg, DEFAULT_SEED)?;
    let every = (trained.curve.len() / 10).max(1);
    for (i, e) in trained.curve.iter().enumerate().step_by(every) {
        println!("step {i:>4}  error {e:.6}");
    }
    print!("{}", trained.report.to_text());
    Ok(())
}
