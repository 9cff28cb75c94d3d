use bevkit::harness::{
    check_problem, demo_temporal, golden_generate, golden_verify, gradcheck, properties, run_props, target_names,
    CheckRecord, CheckReport, DemoMode, FiniteDiffConfig, GradProblem, HarnessConfig, CASES, MANIFEST,
};
use bevkit::synth::{smooth_field, MotionSpec};
use bevkit::{SeededRng, Tensor};

#[test]
fn checker_is_exact_on_a_quadratic() {
    let problem = GradProblem::new(
        vec![("x".into(), Tensor::scalar(3.0))],
        |xs| Ok(xs[0].map(|v| v * v)),
        |xs, w| Ok(vec![Tensor::scalar(2.0 * xs[0].item() * w.item())]),
    );
    let checks = check_problem(&problem, &FiniteDiffConfig::default(), &mut SeededRng::new(1)).unwrap();
    assert_eq!(checks.len(), 1);
    assert!(checks[0].max_rel_err < 1e-10, "{checks:?}");
}

#[test]
fn checker_catches_a_wrong_gradient() {
    let problem = GradProblem::new(
        vec![("x".into(), Tensor::new(vec![3], vec![0.5, -1.0, 2.0]).unwrap())],
        |xs| Ok(xs[0].map(f64::sin)),
        |xs, w| Ok(vec![xs[0].zip_map(w, |x, w| 1.01 * x.cos() * w).unwrap()]),
    );
    let checks = check_problem(&problem, &FiniteDiffConfig::default(), &mut SeededRng::new(2)).unwrap();
    assert!(checks[0].max_rel_err > 5e-3);
}

#[test]
fn registry_covers_every_module() {
    let names = target_names();
    for prefix in ["pdf.", "dgtf.", "igdr."] {
        assert!(names.iter().any(|n| n.starts_with(prefix)), "{prefix}");
    }
    for name in ["pdf.total_depth_loss", "dgtf.dgtf_step", "igdr.igdr_forward"] {
        assert!(names.contains(&name), "{name}");
    }
}

#[test]
fn unknown_target_lists_valid_names() {
    let err = gradcheck("pdf.nope", &HarnessConfig::default(), 42).unwrap_err().to_string();
    assert!(err.contains("pdf.total_depth_loss") && err.contains("igdr.igdr_forward"), "{err}");
}

#[test]
fn module_prefix_runs_only_that_module() {
    let report = gradcheck("igdr", &HarnessConfig::default(), 42).unwrap();
    assert!(report.pass);
    assert!(!report.checks.is_empty());
    assert!(report.checks.iter().all(|c| c.name.starts_with("igdr.")));
}

#[test]
fn identical_inputs_identical_reports() {
    let cfg = HarnessConfig::default();
    let strip = |mut r: CheckReport| {
        r.checks.iter_mut().for_each(|c| c.ms = 0.0);
        r
    };
    let a = strip(gradcheck("dgtf.dgtf_step", &cfg, 7).unwrap());
    let b = strip(gradcheck("dgtf.dgtf_step", &cfg, 7).unwrap());
    assert_eq!(a, b);
    let p = strip(run_props("pdf", &cfg, 7, 20, None).unwrap());
    let q = strip(run_props("pdf", &cfg, 7, 20, None).unwrap());
    assert_eq!(p, q);
}

#[test]
fn zero_trials_is_a_vacuous_pass() {
    let r = run_props("all", &HarnessConfig::default(), 1, 0, None).unwrap();
    assert!(r.pass && r.checks.is_empty());
    assert!(run_props("bogus", &HarnessConfig::default(), 1, 5, None).is_err());
}

#[test]
fn dgtf_suite_passes_at_200_trials() {
    let r = run_props("dgtf", &HarnessConfig::default(), 42, 200, None).unwrap();
    assert!(r.pass, "{}", r.to_text());
    assert_eq!(r.checks.len(), properties().iter().filter(|p| p.name.starts_with("dgtf.")).count());
}

#[test]
fn failing_property_dumps_its_input() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = HarnessConfig::default();
    let props = properties();
    let mut prop = props.into_iter().find(|p| p.name == "tensor.softmax_normalized").unwrap();
    prop.tol = -1.0;
    let (record, trial) = bevkit::harness::run_property(&prop, &cfg, 3, 4).unwrap();
    assert!(!record.passed());
    let trial = trial.expect("failing trial kept");
    bevkit::harness::dump_trial(dir.path(), &trial).unwrap();
    for (name, t) in &trial.inputs {
        let (back, _) = bevkit::rten::read(dir.path().join(format!("{name}.rten"))).unwrap();
        assert_eq!(&back, t);
    }
}

#[test]
fn golden_round_trip_and_corruption() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = HarnessConfig::default();
    let gen = golden_generate(dir.path(), &cfg, 42).unwrap();
    assert!(gen.pass && !gen.checks.is_empty());
    let ok = golden_verify(dir.path(), &cfg).unwrap();
    assert!(ok.pass, "{}", ok.to_text());
    assert_eq!(ok.checks.len(), gen.checks.len());
    for case in CASES {
        assert!(ok.checks.iter().any(|c| c.name.starts_with(&format!("{case}/"))));
    }
    let f32_worst = ok.checks.iter().filter(|c| c.name.ends_with(".f32.rten")).map(|c| c.value).fold(0.0, f64::max);
    assert!(f32_worst <= 1e-6);

    let target = dir.path().join("igdr").join("out.f_final.rten");
    let mut bytes = std::fs::read(&target).unwrap();
    let last = bytes.len() - 1;
    bytes[last] ^= 0x40;
    std::fs::write(&target, bytes).unwrap();
    let bad = golden_verify(dir.path(), &cfg).unwrap();
    assert!(!bad.pass);
    let failed: Vec<&CheckRecord> = bad.failures().collect();
    assert_eq!(failed.len(), 1);
    assert_eq!(failed[0].name, "igdr/out.f_final.rten");

    std::fs::remove_file(dir.path().join("dgtf").join("frame0.f_rc.f32.rten")).unwrap();
    let missing = golden_verify(dir.path(), &cfg).unwrap();
    assert!(missing.failures().any(|c| c.name == "dgtf/frame0.f_rc.f32.rten (missing)"));

    std::fs::write(dir.path().join(MANIFEST), "{").unwrap();
    let corrupt = golden_verify(dir.path(), &cfg).unwrap();
    assert!(!corrupt.pass);
}

fn motion(shift: (i64, i64), noise: f64) -> MotionSpec {
    MotionSpec {
        base_feature: smooth_field(&[1, 2, 12, 12], 5).unwrap(),
        shift,
        n_frames: 3,
        noise_sigma: noise,
        seed: 8,
    }
}

#[test]
fn oracle_demo_without_motion_is_exact() {
    let out = demo_temporal(&motion((0, 0), 0.0), DemoMode::Oracle, 0, 1e-2, &HarnessConfig::default(), 1).unwrap();
    assert!(out.report.pass);
    assert!(out.curve.iter().all(|&e| e == 0.0));
}

#[test]
fn oracle_demo_compensates_integer_shifts() {
    for dy in -2..=2 {
        for dx in -2..=2 {
            let out = demo_temporal(&motion((dy, dx), 0.1), DemoMode::Oracle, 0, 1e-2, &HarnessConfig::default(), 1)
                .unwrap();
            assert!(out.report.pass, "shift ({dy}, {dx}): {:?}", out.curve);
        }
    }
}

#[test]
fn trained_demo_rejects_bad_lr_and_flags_divergence() {
    let cfg = HarnessConfig::default();
    let spec = motion((1, 0), 0.05);
    assert!(demo_temporal(&spec, DemoMode::Trained, 5, 0.0, &cfg, 1).is_err());
    let out = demo_temporal(&spec, DemoMode::Trained, 50, 1e3, &cfg, 1).unwrap();
    assert!(!out.report.pass);
    let record = out.report.checks.iter().find(|c| c.name.starts_with("trained.max_error_ratio")).unwrap();
    assert!(record.name.contains("lr=1000"));
    assert!(!record.passed());
}

#[test]
fn report_json_is_canonical() {
    let empty = CheckReport::new("empty", 42, HarnessConfig::default().to_json());
    let v: serde_json::Value = serde_json::from_str(&empty.to_json()).unwrap();
    assert_eq!(v["checks"], serde_json::json!([]));
    assert_eq!(v["pass"], serde_json::json!(true));

    let mut r = gradcheck("pdf.kl_prob_loss", &HarnessConfig::default(), 42).unwrap();
    r.push(CheckRecord::at_most("forced", 2.0, 1.0, 0.0));
    assert!(!r.pass);
    let text = r.to_json();
    assert_eq!(CheckReport::from_json(&text).unwrap().to_json(), text);
    let keys: Vec<&str> = ["\"suite\"", "\"checks\"", "\"pass\"", "\"seed\"", "\"config\""]
        .into_iter()
        .collect();
    let positions: Vec<usize> = keys.iter().map(|k| text.find(k).unwrap()).collect();
    assert!(positions.windows(2).all(|w| w[0] < w[1]));
}

#[test]
fn non_finite_measurements_fail() {
    let r = CheckRecord::at_most("nan", f64::NAN, 1.0, 0.0);
    assert!(!r.passed());
    assert_eq!(r.value, f64::MAX);
}
