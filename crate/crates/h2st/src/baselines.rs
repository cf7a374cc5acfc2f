//! Score-based OOD detection baselines and the oracle threshold-search
//! protocol they need: per-task thresholds fitted by maximizing F1 over a
//! fixed grid of candidates between the observed score extremes.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::detection::Detection;
use crate::error::{Error, Result};
use crate::task_model::TaskModel;

/// Number of evenly spaced threshold candidates: a decile of the score
/// range split into hundredths.
const THRESHOLD_CANDIDATES: usize = 1000;

/// Score functions; higher means more in-distribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreKind {
    /// Maximum softmax probability.
    Msp,
    /// Largest raw logit.
    MaxLogit,
    /// Log-sum-exp of the logits at temperature 1.
    Energy,
    /// Euclidean norm of the feature vector.
    FeatureNorm,
}

impl ScoreKind {
    pub const ALL: [ScoreKind; 4] = [
        ScoreKind::Msp,
        ScoreKind::MaxLogit,
        ScoreKind::Energy,
        ScoreKind::FeatureNorm,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ScoreKind::Msp => "msp",
            ScoreKind::MaxLogit => "max_logit",
            ScoreKind::Energy => "energy",
            ScoreKind::FeatureNorm => "feature_norm",
        }
    }
}

/// Computes one OOD score from a head's logits and the sample's feature.
pub fn score(kind: ScoreKind, logits: &[f64], feature: &[f64]) -> Result<f64> {
    match kind {
        ScoreKind::Msp => {
            if logits.is_empty() {
                return Err(Error::EmptyInput("logits"));
            }
            let z_max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let exp_sum: f64 = logits.iter().map(|z| (z - z_max).exp()).sum();
            Ok(1.0 / exp_sum)
        }
        ScoreKind::MaxLogit => logits
            .iter()
            .cloned()
            .fold(None, |best: Option<f64>, z| {
                Some(best.map_or(z, |b| b.max(z)))
            })
            .ok_or(Error::EmptyInput("logits")),
        ScoreKind::Energy => {
            if logits.is_empty() {
                return Err(Error::EmptyInput("logits"));
            }
            let z_max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let exp_sum: f64 = logits.iter().map(|z| (z - z_max).exp()).sum();
            Ok(z_max + exp_sum.ln())
        }
        ScoreKind::FeatureNorm => {
            if feature.is_empty() {
                return Err(Error::EmptyInput("feature"));
            }
            Ok(feature.iter().map(|v| v * v).sum::<f64>().sqrt())
        }
    }
}

/// Precision-recall F1 (fraction, not percent) of classifying ID as
/// `score >= threshold`.
fn f1_at_threshold(id_scores: &[f64], ood_scores: &[f64], threshold: f64) -> f64 {
    let tp = id_scores.iter().filter(|&&s| s >= threshold).count() as f64;
    let fp = ood_scores.iter().filter(|&&s| s >= threshold).count() as f64;
    let fn_ = id_scores.len() as f64 - tp;
    if tp == 0.0 {
        return 0.0;
    }
    let precision = tp / (tp + fp);
    let recall = tp / (tp + fn_);
    2.0 * precision * recall / (precision + recall)
}

/// Finds the threshold maximizing F1 over `THRESHOLD_CANDIDATES` evenly
/// spaced candidates between the pooled minimum and maximum score.
///
/// A sample counts as ID when its score is at or above the threshold.
/// Ties resolve to the smallest candidate.
pub fn threshold_search(id_scores: &[f64], ood_scores: &[f64]) -> Result<f64> {
    if id_scores.is_empty() || ood_scores.is_empty() {
        return Err(Error::EmptyInput("threshold search needs both score lists"));
    }
    let all = id_scores.iter().chain(ood_scores);
    let min = all.clone().cloned().fold(f64::INFINITY, f64::min);
    let max = all.cloned().fold(f64::NEG_INFINITY, f64::max);
    if min == max {
        return Ok(min);
    }
    let mut best_threshold = min;
    let mut best_f1 = -1.0;
    for i in 0..THRESHOLD_CANDIDATES {
        let t = min + (max - min) * i as f64 / (THRESHOLD_CANDIDATES - 1) as f64;
        let f = f1_at_threshold(id_scores, ood_scores, t);
        if f > best_f1 {
            best_f1 = f;
            best_threshold = t;
        }
    }
    Ok(best_threshold)
}

/// Per-task thresholds for one score kind.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThresholdTable {
    pub score_kind: ScoreKind,
    thresholds: BTreeMap<usize, f64>,
}

impl ThresholdTable {
    pub fn new(score_kind: ScoreKind) -> Self {
        Self {
            score_kind,
            thresholds: BTreeMap::new(),
        }
    }

    pub fn set(&mut self, task: usize, threshold: f64) {
        self.thresholds.insert(task, threshold);
    }

    pub fn get(&self, task: usize) -> Option<f64> {
        self.thresholds.get(&task).copied()
    }

    pub fn tasks(&self) -> Vec<usize> {
        self.thresholds.keys().copied().collect()
    }

    pub fn is_empty(&self) -> bool {
        self.thresholds.is_empty()
    }
}

/// Outcome of one baseline detection.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BaselineVerdict {
    pub detection: Detection,
    /// True when several task thresholds were met at once and the margin
    /// rule had to pick one.
    pub ambiguous: bool,
}

/// Scores `x` under every learned task head and applies the per-task
/// thresholds.
///
/// The sample is ID for task `t` when `score_t >= γ_t`. No passing task
/// means OOD; exactly one passes and that task wins; several pass and the
/// task with the largest margin `score_t − γ_t` wins, flagged ambiguous.
pub fn baseline_detect(
    table: &ThresholdTable,
    model: &TaskModel,
    x: &[f64],
) -> Result<BaselineVerdict> {
    let tasks = model.tasks();
    if tasks.is_empty() {
        return Err(Error::EmptyInput("model has no learned tasks"));
    }
    let feature = model.extract(x)?;
    let mut best: Option<(usize, f64)> = None;
    let mut passing = 0usize;
    for task in tasks {
        let gamma = table
            .get(task)
            .ok_or(Error::MissingThreshold(task))?;
        let logits = model.logits(x, task)?;
        let s = score(table.score_kind, &logits, &feature)?;
        let margin = s - gamma;
        if margin >= 0.0 {
            passing += 1;
            if best.map_or(true, |(_, m)| margin > m) {
                best = Some((task, margin));
            }
        }
    }
    Ok(BaselineVerdict {
        detection: best.map_or(Detection::Ood, |(t, _)| Detection::Id(t)),
        ambiguous: passing > 1,
    })
}
