use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform discretisation of `[d_min, d_max]` metres into `count` bins.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawBins", into = "RawBins")]
pub struct DepthBinSpec {
    d_min: f64,
    d_max: f64,
    centers: Vec<f64>,
}

#[derive(Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBins {
    d_min: f64,
    d_max: f64,
    count: usize,
}

impl TryFrom<RawBins> for DepthBinSpec {
    type Error = Error;

    fn try_from(raw: RawBins) -> Result<Self> {
        DepthBinSpec::new(raw.d_min, raw.d_max, raw.count)
    }
}

impl From<DepthBinSpec> for RawBins {
    fn from(b: DepthBinSpec) -> Self {
        RawBins {
            d_min: b.d_min,
            d_max: b.d_max,
            count: b.count(),
        }
    }
}

impl DepthBinSpec {
    pub fn new(d_min: f64, d_max: f64, count: usize) -> Result<Self> {
        if !(d_min > 0.0 && d_max > d_min && d_max.is_finite()) {
            return Err(Error::invalid(
                "DepthBinSpec",
                format!("need 0 < d_min < d_max, got [{d_min}, {d_max}]"),
            ));
        }
        if count < 2 {
            return Err(Error::invalid("DepthBinSpec", format!("need at least 2 bins, got {count}")));
        }
        let width = (d_max - d_min) / count as f64;
        let centers = (0..count).map(|k| d_min + (k as f64 + 0.5) * width).collect();
        Ok(DepthBinSpec { d_min, d_max, centers })
    }

    pub fn d_min(&self) -> f64 {
        self.d_min
    }

    pub fn d_max(&self) -> f64 {
        self.d_max
    }

    pub fn count(&self) -> usize {
        self.centers.len()
    }

    pub fn width(&self) -> f64 {
        (self.d_max - self.d_min) / self.count() as f64
    }

    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    pub fn contains(&self, depth: f64) -> bool {
        depth >= self.d_min && depth <= self.d_max
    }
}

impl Default for DepthBinSpec {
    /// 70 bins over the 1-70 m evaluation range.
    fn default() -> Self {
        DepthBinSpec::new(1.0, 70.0, 70).expect("valid default bins")
    }
}
