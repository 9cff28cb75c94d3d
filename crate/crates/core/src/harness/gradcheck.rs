use crate::error::{Error, Result};
use crate::rng::SeededRng;
use crate::tensor::Tensor;

use super::config::{FiniteDiffConfig, HarnessConfig};
use super::registry::{self, Target};
use super::report::{timed, CheckRecord, CheckReport};

type Forward = Box<dyn Fn(&[Tensor]) -> Result<Tensor>>;
type Backward = Box<dyn Fn(&[Tensor], &Tensor) -> Result<Vec<Tensor>>>;

/// A differentiable function of named tensors with its vector-Jacobian
/// product. The checker contracts the output with a random cotangent `w`
/// and compares `backward(inputs, w)` against central differences of
/// `sum(w * forward(inputs))`.
pub struct GradProblem {
    pub inputs: Vec<(String, Tensor)>,
    forward: Forward,
    backward: Backward,
}

impl GradProblem {
    pub fn new(
        inputs: Vec<(String, Tensor)>,
        forward: impl Fn(&[Tensor]) -> Result<Tensor> + 'static,
        backward: impl Fn(&[Tensor], &Tensor) -> Result<Vec<Tensor>> + 'static,
    ) -> Self {
        GradProblem {
            inputs,
            forward: Box::new(forward),
            backward: Box::new(backward),
        }
    }

    pub fn forward(&self, inputs: &[Tensor]) -> Result<Tensor> {
        (self.forward)(inputs)
    }

    pub fn backward(&self, inputs: &[Tensor], cotangent: &Tensor) -> Result<Vec<Tensor>> {
        (self.backward)(inputs, cotangent)
    }
}

/// Worst relative error over the probed elements of one input.
#[derive(Clone, Debug, PartialEq)]
pub struct TensorCheck {
    pub name: String,
    pub max_rel_err: f64,
    pub probed: usize,
    /// Probes whose stencil straddled a derivative jump and were repeated
    /// with a smaller step.
    pub kinks: usize,
}

pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Up to `max` distinct indices below `len`, seeded; all of them if `len <= max`.
pub fn probe_indices(len: usize, max: usize, rng: &mut SeededRng) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..len).collect();
    if len <= max {
        return idx;
    }
    for i in 0..max {
        let j = i + rng.below(len - i);
        idx.swap(i, j);
    }
    idx.truncate(max);
    idx.sort_unstable();
    idx
}

/// A derivative jump inside the stencil shows up as one-sided quotients
/// that disagree by at least the central error; such probes are repeated
/// with the step cut by `KINK_SHRINK`, at most `KINK_RETRIES` times.
const KINK_SHRINK: f64 = 0.1;
const KINK_RETRIES: usize = 3;

fn contracted_diff(a: &Tensor, b: &Tensor, w: &Tensor) -> f64 {
    a.data().iter().zip(b.data()).zip(w.data()).map(|((p, m), wv)| wv * (p - m)).sum()
}

/// Central difference at element `i` of input `t`, plus the two one-sided
/// quotients.
fn probe(problem: &GradProblem, work: &mut [Tensor], t: usize, i: usize, h: f64, base: &Tensor, w: &Tensor) -> Result<(f64, f64, f64)> {
    let x0 = work[t].data()[i];
    work[t].data_mut()[i] = x0 + h;
    let plus = problem.forward(work)?;
    work[t].data_mut()[i] = x0 - h;
    let minus = problem.forward(work)?;
    work[t].data_mut()[i] = x0;
    Ok((
        contracted_diff(&plus, &minus, w) / (2.0 * h),
        contracted_diff(&plus, base, w) / h,
        contracted_diff(base, &minus, w) / h,
    ))
}

pub fn check_problem(problem: &GradProblem, cfg: &FiniteDiffConfig, rng: &mut SeededRng) -> Result<Vec<TensorCheck>> {
    cfg.validate()?;
    let base: Vec<Tensor> = problem.inputs.iter().map(|(_, t)| t.clone()).collect();
    let out = problem.forward(&base)?;
    let w = rng.normal_tensor(out.shape(), 1.0);
    let scale: f64 = out.data().iter().zip(w.data()).map(|(o, wv)| (o * wv).abs()).sum();
    // Smallest derivative a step of `h` can resolve above roundoff.
    let resolution = |h: f64| (cfg.floor).max(4.0 * f64::EPSILON * scale / h);
    let analytic = problem.backward(&base, &w)?;
    if analytic.len() != base.len() {
        return Err(Error::shape("check_problem", "gradient count", base.len(), analytic.len()));
    }
    let mut checks = Vec::with_capacity(base.len());
    for (t, (name, value)) in problem.inputs.iter().enumerate() {
        analytic[t].expect_shape("check_problem", name, value.shape())?;
        let mut work = base.clone();
        let mut worst: f64 = 0.0;
        let mut kinks = 0;
        let probes = probe_indices(value.len(), cfg.max_probe, rng);
        for &i in &probes {
            let a = analytic[t].data()[i];
            let (mut numeric, fwd, bwd) = probe(problem, &mut work, t, i, cfg.h, &out, &w)?;
            let mut err = relative_error(a, numeric, resolution(cfg.h));
            let mut gap = relative_error(fwd, bwd, resolution(cfg.h));
            let mut h = cfg.h;
            let mut retries = 0;
            if err > cfg.tol && gap >= err {
                kinks += 1;
            }
            while err > cfg.tol
                && gap >= err
                && retries < KINK_RETRIES
                && resolution(h * KINK_SHRINK) <= cfg.tol * a.abs()
            {
                h *= KINK_SHRINK;
                retries += 1;
                let (c, f, b) = probe(problem, &mut work, t, i, h, &out, &w)?;
                numeric = c;
                err = relative_error(a, numeric, resolution(h));
                gap = relative_error(f, b, resolution(h));
            }
            worst = if err.is_nan() { f64::INFINITY } else { worst.max(err) };
        }
        checks.push(TensorCheck {
            name: name.clone(),
            max_rel_err: worst,
            probed: probes.len(),
            kinks,
        });
    }
    Ok(checks)
}

/// FNV-1a, used to give every target its own random stream.
pub(crate) fn stream_id(name: &str) -> u64 {
    name.bytes()
        .fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

pub fn run_target(target: &Target, cfg: &HarnessConfig, seed: u64) -> Result<Vec<CheckRecord>> {
    let mut rng = SeededRng::derive(seed, stream_id(target.name));
    let (result, ms) = timed(|| -> Result<Vec<TensorCheck>> {
        let problem = (target.build)(cfg, &mut rng)?;
        check_problem(&problem, &cfg.finite_diff, &mut rng)
    });
    let tol = target.tol.unwrap_or(cfg.finite_diff.tol);
    let checks = result?;
    let per = ms / checks.len().max(1) as f64;
    Ok(checks
        .into_iter()
        .map(|c| CheckRecord::at_most(format!("{}:{}", target.name, c.name), c.max_rel_err, tol, per))
        .collect())
}

/// Runs one registered target, or all of them for `"all"`, or every target
/// under a prefix such as `"dgtf"`.
pub fn gradcheck(target: &str, cfg: &HarnessConfig, seed: u64) -> Result<CheckReport> {
    let all = registry::targets();
    let selected: Vec<&Target> = match target {
        "all" => all.iter().collect(),
        name => {
            let exact: Vec<&Target> = all.iter().filter(|t| t.name == name).collect();
            if exact.is_empty() {
                all.iter().filter(|t| t.name.split('.').next() == Some(name)).collect()
            } else {
                exact
            }
        }
    };
    if selected.is_empty() {
        return Err(Error::UnknownTarget {
            name: target.to_string(),
            valid: all.iter().map(|t| t.name).collect::<Vec<_>>().join(", "),
        });
    }
    let mut report = CheckReport::new(format!("gradcheck:{target}"), seed, cfg.to_json());
    for t in selected {
        for record in run_target(t, cfg, seed)? {
            report.push(record);
        }
    }
    Ok(report)
}
