use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckRecord {
    pub name: String,
    pub status: Status,
    /// Measured quantity; non-finite measurements are stored as `f64::MAX`.
    pub value: f64,
    pub tol: f64,
    pub ms: f64,
}

impl CheckRecord {
    /// Passes iff `value <= tol`.
    pub fn at_most(name: impl Into<String>, value: f64, tol: f64, ms: f64) -> Self {
        Self::with_status(name, value, tol, ms, value <= tol)
    }

    pub fn with_status(name: impl Into<String>, value: f64, tol: f64, ms: f64, pass: bool) -> Self {
        let finite = value.is_finite();
        CheckRecord {
            name: name.into(),
            status: if pass && finite { Status::Pass } else { Status::Fail },
            value: if finite { value } else { f64::MAX },
            tol,
            ms,
        }
    }

    pub fn passed(&self) -> bool {
        self.status == Status::Pass
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub suite: String,
    pub checks: Vec<CheckRecord>,
    pub pass: bool,
    pub seed: u64,
    pub config: Value,
}

impl CheckReport {
    pub fn new(suite: impl Into<String>, seed: u64, config: Value) -> Self {
        CheckReport {
            suite: suite.into(),
            checks: Vec::new(),
            pass: true,
            seed,
            config,
        }
    }

    pub fn push(&mut self, record: CheckRecord) {
        self.pass &= record.passed();
        self.checks.push(record);
    }

    pub fn extend(&mut self, other: CheckReport) {
        for r in other.checks {
            self.push(r);
        }
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckRecord> {
        self.checks.iter().filter(|c| !c.passed())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises")
    }

    pub fn from_json(text: &str) -> std::result::Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "suite {} (seed {})", self.suite, self.seed);
        for c in &self.checks {
            let tag = if c.passed() { "PASS" } else { "FAIL" };
            let _ = writeln!(s, "  {tag}  {:<48} value {:.3e}  tol {:.1e}  {:.1} ms", c.name, c.value, c.tol, c.ms);
        }
        let _ = writeln!(
            s,
            "{}: {} of {} checks passed",
            if self.pass { "PASS" } else { "FAIL" },
            self.checks.len() - self.failures().count(),
            self.checks.len()
        );
        s
    }

    pub fn write(&self, path: &Path, format: ReportFormat) -> Result<()> {
        let text = match format {
            ReportFormat::Json => self.to_json(),
            ReportFormat::Text => self.to_text(),
        };
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| Error::json(path, e))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Text,
}

/// Runs `f` and returns its result with the elapsed wall time in ms.
pub fn timed<T>(f: impl FnOnce() -> T) -> (T, f64) {
    let start = Instant::now();
    let out = f();
    (out, start.elapsed().as_secs_f64() * 1e3)
}
