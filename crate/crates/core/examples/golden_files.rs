//! Writes golden tensors for every module, verifies them, then corrupts one
//! file to show how a regression is reported.
//!
//! ```text
//! cargo run --example golden_files [DIR]
//! ```

use std::path::PathBuf;

use bevkit::harness::{golden_generate, golden_verify, HarnessConfig, DEFAULT_SEED};

fn main() -> bevkit::Result<()> {
    let dir = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("bevkit_golden"));
    let cfg = HarnessConfig::default();
    let written = golden_generate(&dir, &cfg, DEFAULT_SEED)?;
    println!("wrote {} files under {}", written.checks.len(), dir.display());
    let verified = golden_verify(&dir, &cfg)?;
    println!("verify: {}", if verified.pass { "PASS" } else { "FAIL" });

    let victim = dir.join("dgtf").join("frame2.f_rc.rten");
    let mut bytes = std::fs::read(&victim).map_err(|e| bevkit::Error::Io { path: victim.clone(), source: e })?;
    let last = bytes.len() - 1;
    bytes[last] ^= 0x01;
    std::fs::write(&victim, bytes).map_err(|e| bevkit::Error::Io { path: victim.clone(), source: e })?;
    for c in golden_verify(&dir, &cfg)?.failures() {
        println!("after corruption: FAIL {} ({} elements differ)", c.name, c.value);
    }
    Ok(())
}
