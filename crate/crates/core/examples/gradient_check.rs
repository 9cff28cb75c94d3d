//! Checks every registered backward pass against central differences.
//!
//! ```text
//! cargo run --example gradient_check [TARGET]
//! ```

use bevkit::harness::{gradcheck, target_names, HarnessConfig, DEFAULT_SEED};

fn main() -> bevkit::Result<()> {
    let target = std::env::args().nth(1).unwrap_or_else(|| "all".into());
    if target == "--list" {
        target_names().iter().for_each(|n| println!("{n}"));
        return Ok(());
    }
    let report = gradcheck(&target, &HarnessConfig::default(), DEFAULT_SEED)?;
    print!("{}", report.to_text());
    std::process::exit(if report.pass { 0 } else { 1 });
}
