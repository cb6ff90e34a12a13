//! Benchmark metrics for repetition counting.
//!
//! Given ground-truth counts `c_i` and predicted counts `ĉ_i` over `N` videos:
//!
//! - **OBOA** (off-by-one accuracy): `(1/N) Σ 1(|c_i − ĉ_i| ≤ 1)`.
//! - **OBOE** (off-by-one error): `1 − OBOA`.
//! - **MAE**: `(1/N) Σ |c_i − ĉ_i| / (α + c_i)`.
//!
//! The MAE offset `α` is not a constant of the metric. Some code bases use
//! `α = 0` and others `α = 0.1`, and the two are not comparable, so every
//! entry point here takes it explicitly and every [`MetricReport`] records
//! the value that was used. With `α = 0` a video whose ground truth is zero
//! is an error rather than being skipped, because skipping changes `N`.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sum::compensated_sum;

/// One video's ground-truth count paired with a predicted count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountPair {
    pub video_id: String,
    pub gt_count: f64,
    pub pred_count: f64,
}

impl CountPair {
    pub fn new(video_id: impl Into<String>, gt_count: f64, pred_count: f64) -> Self {
        Self {
            video_id: video_id.into(),
            gt_count,
            pred_count,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.video_id.is_empty() {
            return Err(Error::invalid("video_id", "must be non-empty"));
        }
        for (field, v) in [("gt_count", self.gt_count), ("pred_count", self.pred_count)] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::invalid(
                    field,
                    format!(
                        "video '{}': {v} is not a finite non-negative number",
                        self.video_id
                    ),
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricConfig {
    /// Offset added to the ground-truth count in the MAE denominator.
    pub alpha: f64,
    /// Round predictions to the nearest integer before scoring.
    pub round_predictions: bool,
}

impl Default for MetricConfig {
    fn default() -> Self {
        Self {
            alpha: 0.0,
            round_predictions: false,
        }
    }
}

impl MetricConfig {
    pub fn with_alpha(alpha: f64) -> Self {
        Self {
            alpha,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.alpha.is_finite() || self.alpha < 0.0 {
            return Err(Error::invalid(
                "alpha",
                format!("{} must be finite and >= 0", self.alpha),
            ));
        }
        Ok(())
    }

    fn prediction(&self, pair: &CountPair) -> f64 {
        if self.round_predictions {
            pair.pred_count.round()
        } else {
            pair.pred_count
        }
    }
}

/// One row of a [`MetricReport`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoScore {
    pub video_id: String,
    pub gt: f64,
    /// Prediction as scored, i.e. after optional rounding.
    pub pred: f64,
    pub abs_err: f64,
    pub within_one: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub n_videos: usize,
    pub oboa: f64,
    pub oboe: f64,
    pub mae: f64,
    pub alpha_used: f64,
    pub per_video: Vec<VideoScore>,
}

/// Checks the per-pair invariants and id uniqueness.
pub fn validate_pairs(pairs: &[CountPair]) -> Result<()> {
    if pairs.is_empty() {
        return Err(Error::EmptyEvaluationSet);
    }
    let mut seen = HashSet::with_capacity(pairs.len());
    for pair in pairs {
        pair.validate()?;
        if !seen.insert(pair.video_id.as_str()) {
            return Err(Error::DuplicateVideoId(pair.video_id.clone()));
        }
    }
    Ok(())
}

fn within_one(gt: f64, pred: f64) -> bool {
    (gt - pred).abs() <= 1.0
}

/// Off-by-one accuracy. The `≤ 1` comparison is inclusive.
pub fn oboa(pairs: &[CountPair], config: &MetricConfig) -> Result<f64> {
    validate_pairs(pairs)?;
    config.validate()?;
    let hits = pairs
        .iter()
        .filter(|p| within_one(p.gt_count, config.prediction(p)))
        .count();
    Ok(hits as f64 / pairs.len() as f64)
}

/// Off-by-one error, `1 − oboa`. In IEEE round-to-nearest arithmetic
/// `oboa + (1 − oboa)` is exactly 1 for any `oboa` in `[0, 1]`.
pub fn oboe(pairs: &[CountPair], config: &MetricConfig) -> Result<f64> {
    Ok(1.0 - oboa(pairs, config)?)
}

/// Normalized mean absolute error with denominator `α + gt`.
pub fn mae(pairs: &[CountPair], config: &MetricConfig) -> Result<f64> {
    validate_pairs(pairs)?;
    config.validate()?;
    let terms = relative_errors(pairs, config)?;
    Ok(compensated_sum(terms) / pairs.len() as f64)
}

fn relative_errors(pairs: &[CountPair], config: &MetricConfig) -> Result<Vec<f64>> {
    pairs
        .iter()
        .map(|p| {
            let denom = config.alpha + p.gt_count;
            if denom == 0.0 {
                return Err(Error::DivisionByZero {
                    video_id: p.video_id.clone(),
                });
            }
            Ok((p.gt_count - config.prediction(p)).abs() / denom)
        })
        .collect()
}

/// MAE at each α in `alphas`, in input order.
pub fn alpha_sweep(pairs: &[CountPair], alphas: &[f64]) -> Result<Vec<(f64, f64)>> {
    alphas
        .iter()
        .map(|&alpha| {
            mae(pairs, &MetricConfig::with_alpha(alpha))
                .map(|m| (alpha, m))
                .map_err(|e| Error::AtAlpha {
                    alpha,
                    source: Box::new(e),
                })
        })
        .collect()
}

pub fn build_report(pairs: &[CountPair], config: &MetricConfig) -> Result<MetricReport> {
    let oboa = oboa(pairs, config)?;
    let mae = mae(pairs, config)?;
    let per_video = pairs
        .iter()
        .map(|p| {
            let pred = config.prediction(p);
            VideoScore {
                video_id: p.video_id.clone(),
                gt: p.gt_count,
                pred,
                abs_err: (p.gt_count - pred).abs(),
                within_one: within_one(p.gt_count, pred),
            }
        })
        .collect();
    Ok(MetricReport {
        n_videos: pairs.len(),
        oboa,
        oboe: 1.0 - oboa,
        mae,
        alpha_used: config.alpha,
        per_video,
    })
}

impl MetricReport {
    /// Rebuilds the pairs this report was computed from. Predictions come
    /// back as scored (post-rounding).
    pub fn pairs(&self) -> Vec<CountPair> {
        self.per_video
            .iter()
            .map(|row| CountPair::new(row.video_id.clone(), row.gt, row.pred))
            .collect()
    }

    /// Recomputes the aggregates from `per_video` and checks they agree with
    /// the stored ones to `tol`.
    pub fn check_consistency(&self, tol: f64) -> Result<()> {
        if self.per_video.is_empty() {
            return Err(Error::EmptyEvaluationSet);
        }
        if self.n_videos != self.per_video.len() {
            return Err(Error::invalid(
                "n_videos",
                format!(
                    "{} != {} per-video rows",
                    self.n_videos,
                    self.per_video.len()
                ),
            ));
        }
        let config = MetricConfig::with_alpha(self.alpha_used);
        let pairs = self.pairs();
        let oboa = oboa(&pairs, &config)?;
        let mae = mae(&pairs, &config)?;
        let checks = [
            ("oboa", self.oboa, oboa),
            ("oboe", self.oboe, 1.0 - oboa),
            ("mae", self.mae, mae),
        ];
        for (field, stored, recomputed) in checks {
            if (stored - recomputed).abs() > tol {
                return Err(Error::invalid(
                    field,
                    format!("stored {stored} disagrees with recomputed {recomputed}"),
                ));
            }
        }
        for row in &self.per_video {
            if row.within_one != within_one(row.gt, row.pred) {
                return Err(Error::invalid(
                    "within_one",
                    format!("video '{}' flag inconsistent with gt/pred", row.video_id),
                ));
            }
        }
        Ok(())
    }
}
