use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use bevkit::harness::CheckReport;

fn bevkit(state: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bevkit"))
        .args(args)
        .env("BEVKIT_STATE_DIR", state)
        .env_remove("BEVKIT_SEED")
        .output()
        .unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn motion_spec() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("examples/data/motion_spec.json")
}

fn last_report(state: &Path) -> CheckReport {
    CheckReport::read(&state.join("last_report.json")).unwrap()
}

#[test]
fn gradcheck_single_target_passes() {
    let state = tempfile::tempdir().unwrap();
    let out = bevkit(state.path(), &["gradcheck", "--target", "pdf.kl_prob_loss"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stdout));
    let report = last_report(state.path());
    assert!(report.pass && report.seed == 42);
    assert!(report.checks.iter().all(|c| c.name.starts_with("pdf.kl_prob_loss")));
}

#[test]
fn unknown_target_is_an_error_listing_targets() {
    let state = tempfile::tempdir().unwrap();
    let out = bevkit(state.path(), &["gradcheck", "--target", "dgtf.nope"]);
    assert_eq!(code(&out), 2);
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("dgtf.dgtf_step"), "{err}");
}

#[test]
fn impossible_tolerance_fails() {
    let state = tempfile::tempdir().unwrap();
    let out = bevkit(state.path(), &["gradcheck", "--target", "igdr", "--tol", "1e-300"]);
    assert_eq!(code(&out), 1);
    assert!(!last_report(state.path()).pass);
}

#[test]
fn invalid_step_size_is_an_error() {
    let state = tempfile::tempdir().unwrap();
    assert_eq!(code(&bevkit(state.path(), &["gradcheck", "--h", "-1"])), 2);
    assert_eq!(code(&bevkit(state.path(), &["gradcheck", "--bogus"])), 2);
}

#[test]
fn props_with_no_trials_pass() {
    let state = tempfile::tempdir().unwrap();
    assert_eq!(code(&bevkit(state.path(), &["props", "--trials", "0"])), 0);
    let report = last_report(state.path());
    assert!(report.pass && report.checks.is_empty());
    assert_eq!(code(&bevkit(state.path(), &["props", "--suite", "nope"])), 2);
}

#[test]
fn props_suite_runs() {
    let state = tempfile::tempdir().unwrap();
    let out = bevkit(state.path(), &["props", "--suite", "igdr", "--trials", "30", "--seed", "3"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stdout));
    let report = last_report(state.path());
    assert_eq!(report.seed, 3);
    assert!(report.checks.iter().all(|c| c.name.starts_with("igdr.")));
}

#[test]
fn seed_comes_from_environment() {
    let state = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_bevkit"))
        .args(["props", "--suite", "tensor", "--trials", "5"])
        .env("BEVKIT_STATE_DIR", state.path())
        .env("BEVKIT_SEED", "1234")
        .output()
        .unwrap();
    assert_eq!(code(&out), 0);
    assert_eq!(last_report(state.path()).seed, 1234);

    let bad = Command::new(env!("CARGO_BIN_EXE_bevkit"))
        .args(["props", "--suite", "tensor", "--trials", "5"])
        .env("BEVKIT_STATE_DIR", state.path())
        .env("BEVKIT_SEED", "abc")
        .output()
        .unwrap();
    assert_eq!(code(&bad), 2);
}

#[test]
fn report_reproduces_last_run() {
    let state = tempfile::tempdir().unwrap();
    assert_eq!(code(&bevkit(state.path(), &["gradcheck", "--target", "pdf.expected_depth"])), 0);
    let out_path = state.path().join("copy.json");
    let out = bevkit(state.path(), &["report", "--out", out_path.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    assert_eq!(
        std::fs::read_to_string(&out_path).unwrap(),
        std::fs::read_to_string(state.path().join("last_report.json")).unwrap()
    );
    let text_path = state.path().join("copy.txt");
    assert_eq!(code(&bevkit(state.path(), &["report", "--format", "text", "--out", text_path.to_str().unwrap()])), 0);
    assert!(std::fs::read_to_string(&text_path).unwrap().contains("pdf.expected_depth"));
}

#[test]
fn report_without_history_is_empty() {
    let state = tempfile::tempdir().unwrap();
    let out_path = state.path().join("r.json");
    assert_eq!(code(&bevkit(state.path(), &["report", "--out", out_path.to_str().unwrap()])), 0);
    let report = CheckReport::read(&out_path).unwrap();
    assert!(report.pass && report.checks.is_empty());
}

#[test]
fn unwritable_output_is_an_error() {
    let state = tempfile::tempdir().unwrap();
    let blocker = state.path().join("file");
    std::fs::write(&blocker, "x").unwrap();
    let target = blocker.join("r.json");
    assert_eq!(code(&bevkit(state.path(), &["report", "--out", target.to_str().unwrap()])), 2);
}

#[test]
fn golden_generate_verify_and_corrupt() {
    let state = tempfile::tempdir().unwrap();
    let dir = state.path().join("golden");
    let d = dir.to_str().unwrap();
    assert_eq!(code(&bevkit(state.path(), &["golden", "generate", "--dir", d])), 0);
    assert_eq!(code(&bevkit(state.path(), &["golden", "verify", "--dir", d])), 0);

    let victim = dir.join("pdf").join("loss_terms.rten");
    let mut bytes = std::fs::read(&victim).unwrap();
    let last = bytes.len() - 1;
    bytes[last] ^= 0x01;
    std::fs::write(&victim, bytes).unwrap();
    let out = bevkit(state.path(), &["golden", "verify", "--dir", d]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stdout).contains("pdf/loss_terms.rten"));

    assert_eq!(code(&bevkit(state.path(), &["golden", "verify", "--dir", state.path().join("none").to_str().unwrap()])), 1);
}

#[test]
fn temporal_oracle_demo_from_spec_file() {
    let state = tempfile::tempdir().unwrap();
    let spec = motion_spec();
    let out = bevkit(state.path(), &["demo-temporal", "--spec", spec.to_str().unwrap(), "--mode", "oracle"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stdout));
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("curve:"));
    assert_eq!(code(&bevkit(state.path(), &["demo-temporal", "--spec", "/nonexistent.json"])), 2);
}
