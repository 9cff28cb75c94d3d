//! Runs a property suite and reports the worst value seen per property.
//!
//! ```text
//! cargo run --release --example property_suites [SUITE] [TRIALS]
//! ```

use bevkit::harness::{run_props, HarnessConfig, DEFAULT_SEED};

fn main() -> bevkit::Result<()> {
    let mut args = std::env::args().skip(1);
    let suite = args.next().unwrap_or_else(|| "all".into());
    let trials = args.next().and_then(|s| s.parse().ok()).unwrap_or(200);
    let dump = std::env::temp_dir().join("bevkit_failures");
    let report = run_props(&suite, &HarnessConfig::default(), DEFAULT_SEED, trials, Some(&dump))?;
    print!("{}", report.to_text());
    if !report.pass {
        println!("failing inputs under {}", dump.display());
    }
    Ok(())
}
