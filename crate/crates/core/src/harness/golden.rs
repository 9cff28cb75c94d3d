//! Golden-file regression. `generate` evaluates a fixed instance of every
//! module and stores its inputs, parameters and outputs as RTEN files, each
//! in full precision and as an `f32` copy. `verify` recomputes the same
//! tensors and compares: `f64` files bit for bit, `f32` files to a relative
//! error of `1e-6`.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dgtf::run_sequence_traced;
use crate::error::{Error, Result};
use crate::igdr::igdr_forward;
use crate::ops::{bilinear_sample, conv2d, softmax};
use crate::pdf::{total_depth_loss_backward, default_sigma, DEFAULT_BETA};
use crate::rng::SeededRng;
use crate::rten::{self, Dtype};
use crate::tensor::Tensor;

use super::config::HarnessConfig;
use super::fixtures::{dgtf_fixture, igdr_fixture, pdf_fixture};
use super::gradcheck::stream_id;
use super::report::{timed, CheckRecord, CheckReport};

pub const MANIFEST: &str = "golden.json";
pub const F32_REL_TOL: f64 = 1e-6;
pub const CASES: [&str; 4] = ["tensor", "pdf", "dgtf", "igdr"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GoldenManifest {
    pub seed: u64,
    /// Tensor names per case.
    pub cases: BTreeMap<String, Vec<String>>,
}

type Named = Vec<(String, Tensor)>;

fn named(prefix: &str, items: Vec<(String, &Tensor)>) -> Named {
    items.into_iter().map(|(n, t)| (format!("{prefix}{n}"), t.clone())).collect()
}

fn tensor_case(rng: &mut SeededRng) -> Result<Named> {
    let input = rng.normal_tensor(&[1, 3, 6, 6], 1.0);
    let kernel = rng.normal_tensor(&[2, 3, 3, 3], 1.0);
    let bias = rng.normal_tensor(&[2], 1.0);
    let conv = conv2d(&input, &kernel, &bias, (1, 1))?;
    let logits = rng.normal_tensor(&[2, 5, 3, 3], 2.0);
    let soft = softmax(&logits, 1, 0.7)?;
    let feature = rng.normal_tensor(&[3, 5, 5], 1.0);
    let sample = bilinear_sample(&feature, 1.3, 2.6)?;
    Ok(vec![
        ("conv.input".into(), input),
        ("conv.kernel".into(), kernel),
        ("conv.bias".into(), bias),
        ("conv.output".into(), conv),
        ("softmax.logits".into(), logits),
        ("softmax.output".into(), soft),
        ("sample.feature".into(), feature),
        ("sample.output".into(), sample),
    ])
}

fn pdf_case(cfg: &HarnessConfig, rng: &mut SeededRng) -> Result<Named> {
    let (batch, bins) = pdf_fixture(rng)?;
    let sigma = default_sigma(&bins);
    let mut stream = SeededRng::new(cfg.ranking.rng_seed);
    let (report, grad) =
        total_depth_loss_backward(&batch, &bins, &cfg.ranking, &cfg.weights, sigma, DEFAULT_BETA, &mut stream)?;
    let terms = Tensor::new(
        vec![9],
        vec![
            report.l_prob,
            report.l_abs,
            report.l_dense,
            report.l_edge,
            report.l_global,
            report.l_relative,
            report.l_depth,
            report.n_edge_pairs_used as f64,
            report.n_global_pairs_used as f64,
        ],
    )?;
    let mut out = vec![
        ("prob".into(), batch.prob.clone()),
        ("d_sparse".into(), batch.d_sparse.clone()),
        ("mask_sparse".into(), batch.mask_sparse.clone()),
        ("d_dense".into(), batch.d_dense.clone()),
        ("mask_dense".into(), batch.mask_dense.clone()),
    ];
    if let Some(m) = &batch.instance_masks {
        out.push(("instance_masks".into(), m.clone()));
    }
    out.push(("loss_terms".into(), terms));
    out.push(("grad_prob".into(), grad));
    Ok(out)
}

fn dgtf_case(rng: &mut SeededRng) -> Result<Named> {
    let fx = dgtf_fixture(rng, 2, 1, 6)?;
    let frames = vec![fx.x.clone(), fx.h_prev.clone(), rng.normal_tensor(fx.x.shape(), 1.0)];
    let traces = run_sequence_traced(&frames, 1, &fx.params)?;
    let mut out = named("param.", fx.params.tensors());
    for (t, (frame, trace)) in frames.iter().zip(&traces).enumerate() {
        out.push((format!("frame{t}.input"), frame.clone()));
        out.push((format!("frame{t}.delta"), trace.offsets.delta.clone()));
        out.push((format!("frame{t}.mask"), trace.offsets.mask.clone()));
        out.push((format!("frame{t}.aligned"), trace.aligned.clone()));
        out.push((format!("frame{t}.hidden"), trace.hidden().clone()));
        out.push((format!("frame{t}.f_rc"), trace.f_rc.clone()));
    }
    Ok(out)
}

fn igdr_case(cfg: &HarnessConfig, rng: &mut SeededRng) -> Result<Named> {
    let (inputs, params) = igdr_fixture(rng, cfg.temperature)?;
    let output = igdr_forward(&inputs, &params)?;
    let mut out = named("param.", params.tensors());
    out.push(("f_rc".into(), inputs.f_rc.clone()));
    if let Some(inst) = &inputs.instances {
        out.push(("e_features".into(), inst.e_features.clone()));
        out.push(("s_bev".into(), inst.s_bev.clone()));
    }
    out.extend(output.named().into_iter().map(|(n, t)| (format!("out.{n}"), t.clone())));
    Ok(out)
}

/// Every tensor of one canonical case, recomputed from `seed`.
pub fn golden_case(case: &str, cfg: &HarnessConfig, seed: u64) -> Result<Named> {
    let mut rng = SeededRng::derive(seed, stream_id(case));
    match case {
        "tensor" => tensor_case(&mut rng),
        "pdf" => pdf_case(cfg, &mut rng),
        "dgtf" => dgtf_case(&mut rng),
        "igdr" => igdr_case(cfg, &mut rng),
        other => Err(Error::invalid("golden_case", format!("unknown case `{other}`; valid cases: {}", CASES.join(", ")))),
    }
}

fn file_name(name: &str, dtype: Dtype) -> String {
    match dtype {
        Dtype::F64 => format!("{name}.rten"),
        Dtype::F32 => format!("{name}.f32.rten"),
    }
}

/// Writes every case under `dir` and returns one passing record per file.
pub fn golden_generate(dir: &Path, cfg: &HarnessConfig, seed: u64) -> Result<CheckReport> {
    let mut report = CheckReport::new("golden:generate", seed, cfg.to_json());
    let mut manifest = GoldenManifest {
        seed,
        cases: BTreeMap::new(),
    };
    for case in CASES {
        let case_dir = dir.join(case);
        std::fs::create_dir_all(&case_dir).map_err(|e| Error::io(&case_dir, e))?;
        let (tensors, ms) = timed(|| golden_case(case, cfg, seed));
        let tensors = tensors?;
        let per = ms / tensors.len().max(1) as f64;
        for (name, t) in &tensors {
            for dtype in [Dtype::F64, Dtype::F32] {
                let file = file_name(name, dtype);
                rten::write(case_dir.join(&file), t, dtype)?;
                report.push(CheckRecord::at_most(format!("{case}/{file}"), 0.0, 0.0, per));
            }
        }
        manifest.cases.insert(case.to_string(), tensors.into_iter().map(|(n, _)| n).collect());
    }
    let path = dir.join(MANIFEST);
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serialises");
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(report)
}

fn f64_mismatches(stored: &Tensor, expected: &Tensor) -> f64 {
    stored
        .data()
        .iter()
        .zip(expected.data())
        .filter(|(a, b)| a.to_bits() != b.to_bits())
        .count() as f64
}

/// Largest `|stored - expected| / max(|expected|, f32::MIN_POSITIVE)`.
pub fn f32_rel_error(stored: &Tensor, expected: &Tensor) -> f64 {
    stored
        .data()
        .iter()
        .zip(expected.data())
        .map(|(a, b)| {
            let e = (a - b).abs() / b.abs().max(f32::MIN_POSITIVE as f64);
            if e.is_nan() {
                f64::INFINITY
            } else {
                e
            }
        })
        .fold(0.0, f64::max)
}

fn compare(path: &Path, label: String, expected: &Tensor, want: Dtype) -> CheckRecord {
    let tol = match want {
        Dtype::F64 => 0.0,
        Dtype::F32 => F32_REL_TOL,
    };
    let fail = |why: &str| CheckRecord::with_status(format!("{label} ({why})"), f64::MAX, tol, 0.0, false);
    if !path.exists() {
        return fail("missing");
    }
    let (stored, ms) = timed(|| rten::read(path));
    let stored = match stored {
        Ok((t, dtype)) if dtype == want => t,
        Ok(_) => return fail("wrong dtype"),
        Err(_) => return fail("corrupt"),
    };
    if stored.shape() != expected.shape() {
        return fail("shape mismatch");
    }
    let value = match want {
        Dtype::F64 => f64_mismatches(&stored, expected),
        Dtype::F32 => f32_rel_error(&stored, expected),
    };
    CheckRecord::at_most(label, value, tol, ms)
}

/// Recomputes every case with the seed recorded in the manifest and checks
/// each stored file. Missing or unreadable files become failing records.
pub fn golden_verify(dir: &Path, cfg: &HarnessConfig) -> Result<CheckReport> {
    let path = dir.join(MANIFEST);
    let manifest: Option<GoldenManifest> =
        std::fs::read_to_string(&path).ok().and_then(|text| serde_json::from_str(&text).ok());
    let Some(manifest) = manifest else {
        let mut report = CheckReport::new("golden:verify", 0, cfg.to_json());
        let why = if path.exists() { "corrupt" } else { "missing" };
        report.push(CheckRecord::with_status(format!("{MANIFEST} ({why})"), f64::MAX, 0.0, 0.0, false));
        return Ok(report);
    };
    let mut report = CheckReport::new("golden:verify", manifest.seed, cfg.to_json());
    for case in CASES {
        let tensors = golden_case(case, cfg, manifest.seed)?;
        let listed = manifest.cases.get(case).cloned().unwrap_or_default();
        let computed: Vec<&String> = tensors.iter().map(|(n, _)| n).collect();
        if listed.iter().collect::<Vec<_>>() != computed {
            report.push(CheckRecord::with_status(format!("{case} (tensor list differs)"), f64::MAX, 0.0, 0.0, false));
        }
        for (name, t) in &tensors {
            for dtype in [Dtype::F64, Dtype::F32] {
                let file = file_name(name, dtype);
                report.push(compare(&dir.join(case).join(&file), format!("{case}/{file}"), t, dtype));
            }
        }
    }
    Ok(report)
}
