use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pdf::found::{foundation_loss_on_depth, foundation_loss_on_depth_backward};
use crate::pdf::prob::{expected_depth, expected_depth_backward, kl_prob_loss, kl_prob_loss_backward};
use crate::pdf::ranking::{relative_loss, relative_loss_backward, RankingConfig};
use crate::pdf::{DepthBinSpec, DepthSupervisionBatch};
use crate::rng::SeededRng;
use crate::tensor::Tensor;

/// Term weights. The foundation term enters unscaled; its two parts carry
/// `lambda_abs` and `lambda_dense`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DepthLossWeights {
    pub lambda1: f64,
    pub lambda_abs: f64,
    pub lambda_dense: f64,
    pub lambda3: f64,
}

impl DepthLossWeights {
    /// Probabilistic and sparse metric terms only.
    pub const SETTING_A: DepthLossWeights = DepthLossWeights {
        lambda1: 0.1,
        lambda_abs: 0.01,
        lambda_dense: 0.0,
        lambda3: 0.0,
    };
    /// Adds dense metric supervision.
    pub const SETTING_B: DepthLossWeights = DepthLossWeights {
        lambda1: 0.1,
        lambda_abs: 0.01,
        lambda_dense: 0.03,
        lambda3: 0.0,
    };
    /// Full triplet; the default.
    pub const SETTING_C: DepthLossWeights = DepthLossWeights {
        lambda1: 0.1,
        lambda_abs: 0.01,
        lambda_dense: 0.03,
        lambda3: 0.05,
    };

    pub fn validate(&self) -> Result<()> {
        let all = [self.lambda1, self.lambda_abs, self.lambda_dense, self.lambda3];
        if all.iter().all(|&v| v >= 0.0 && v.is_finite()) {
            Ok(())
        } else {
            Err(Error::invalid("DepthLossWeights", format!("weights must be finite and >= 0, got {all:?}")))
        }
    }
}

impl Default for DepthLossWeights {
    fn default() -> Self {
        Self::SETTING_C
    }
}

/// Per-term breakdown of the combined depth loss.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DepthLossReport {
    pub l_prob: f64,
    pub l_abs: f64,
    pub l_dense: f64,
    pub l_edge: f64,
    pub l_global: f64,
    pub l_relative: f64,
    pub l_depth: f64,
    pub n_edge_pairs_used: usize,
    pub n_global_pairs_used: usize,
    #[serde(skip)]
    pub empty_sparse: bool,
    #[serde(skip)]
    pub empty_dense: bool,
}

/// Default Gaussian target spread: one bin width.
pub fn default_sigma(bins: &DepthBinSpec) -> f64 {
    bins.width()
}

pub const DEFAULT_BETA: f64 = 1.0;

struct Evaluated {
    report: DepthLossReport,
    dhat: Tensor,
    relative: crate::pdf::ranking::RelativeLoss,
}

fn evaluate(
    batch: &DepthSupervisionBatch,
    bins: &DepthBinSpec,
    cfg: &RankingConfig,
    weights: &DepthLossWeights,
    sigma: f64,
    beta: f64,
    rng: &mut SeededRng,
) -> Result<Evaluated> {
    weights.validate()?;
    let prob = kl_prob_loss(batch, bins, sigma)?;
    let dhat = expected_depth(&batch.prob, bins)?;
    let found = foundation_loss_on_depth(&dhat, batch, beta, weights.lambda_abs, weights.lambda_dense)?;
    let relative = relative_loss(&dhat, batch, cfg, rng)?;
    let report = DepthLossReport {
        l_prob: prob.value,
        l_abs: found.l_abs,
        l_dense: found.l_dense,
        l_edge: relative.l_edge,
        l_global: relative.l_global,
        l_relative: relative.l_relative,
        l_depth: weights.lambda1 * prob.value + found.l_found + weights.lambda3 * relative.l_relative,
        n_edge_pairs_used: relative.edge_pairs.len(),
        n_global_pairs_used: relative.global_pairs.len(),
        empty_sparse: found.empty_sparse,
        empty_dense: found.empty_dense,
    };
    Ok(Evaluated { report, dhat, relative })
}

/// `lambda1 * l_prob + l_found + lambda3 * l_relative`.
pub fn total_depth_loss(
    batch: &DepthSupervisionBatch,
    bins: &DepthBinSpec,
    cfg: &RankingConfig,
    weights: &DepthLossWeights,
    sigma: f64,
    beta: f64,
    rng: &mut SeededRng,
) -> Result<DepthLossReport> {
    Ok(evaluate(batch, bins, cfg, weights, sigma, beta, rng)?.report)
}

/// [`total_depth_loss`] together with its gradient with respect to
/// `batch.prob`. Ground truths are constants.
pub fn total_depth_loss_backward(
    batch: &DepthSupervisionBatch,
    bins: &DepthBinSpec,
    cfg: &RankingConfig,
    weights: &DepthLossWeights,
    sigma: f64,
    beta: f64,
    rng: &mut SeededRng,
) -> Result<(DepthLossReport, Tensor)> {
    let Evaluated { report, dhat, relative } = evaluate(batch, bins, cfg, weights, sigma, beta, rng)?;
    let mut grad = kl_prob_loss_backward(batch, bins, sigma, weights.lambda1)?;
    let mut g_dhat = foundation_loss_on_depth_backward(&dhat, batch, beta, weights.lambda_abs, weights.lambda_dense, 1.0)?;
    g_dhat.axpy(1.0, &relative_loss_backward(&dhat, batch, cfg, &relative, weights.lambda3)?)?;
    grad.axpy(1.0, &expected_depth_backward(batch.prob.shape(), bins, &g_dhat)?)?;
    Ok((report, grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weight_settings() {
        assert_eq!(DepthLossWeights::default(), DepthLossWeights::SETTING_C);
        let c = DepthLossWeights::SETTING_C;
        assert_eq!((c.lambda1, c.lambda_abs, c.lambda_dense, c.lambda3), (0.1, 0.01, 0.03, 0.05));
        assert!(DepthLossWeights { lambda1: -0.1, ..c }.validate().is_err());
    }

    #[test]
    fn report_json_keys() {
        let report = DepthLossReport {
            l_prob: 0.0,
            l_abs: 0.0,
            l_dense: 0.0,
            l_edge: 0.0,
            l_global: 0.0,
            l_relative: 0.0,
            l_depth: 0.0,
            n_edge_pairs_used: 0,
            n_global_pairs_used: 0,
            empty_sparse: true,
            empty_dense: false,
        };
        let json = serde_json::to_string(&report).unwrap();
        assert_eq!(
            json,
            r#"{"l_prob":0.0,"l_abs":0.0,"l_dense":0.0,"l_edge":0.0,"l_global":0.0,"l_relative":0.0,"l_depth":0.0,"n_edge_pairs_used":0,"n_global_pairs_used":0}"#
        );
    }
}
