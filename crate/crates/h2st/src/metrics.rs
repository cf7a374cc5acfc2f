//! Confusion accounting and the four reported metrics: detection F1,
//! task-id prediction accuracy (TA), average classification accuracy (ACC)
//! and forgetting (FT).
//!
//! F1 and TA are aggregated per detection phase: the round that introduces
//! a new task pooled with the in-distribution rounds that follow it, which
//! keeps both classes of the confusion table populated even when the
//! introduction round is pure OOD.

use serde::Serialize;

use crate::detection::Detection;
use crate::error::{Error, Result};

/// Ground truth of one detection record.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Truth {
    /// The sample belongs to an already-learned task.
    Id(usize),
    /// The sample belongs to no learned task.
    Ood,
}

/// Binary ID/OOD confusion counts; ID is the positive class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct ConfusionCounts {
    /// IDs correctly predicted as ID.
    pub true_pos: u64,
    /// OODs incorrectly predicted as ID.
    pub false_pos: u64,
    /// OODs correctly predicted as OOD.
    pub true_neg: u64,
    /// IDs incorrectly predicted as OOD.
    pub false_neg: u64,
}

impl ConfusionCounts {
    pub fn new(true_pos: u64, false_pos: u64, true_neg: u64, false_neg: u64) -> Self {
        Self {
            true_pos,
            false_pos,
            true_neg,
            false_neg,
        }
    }

    pub fn record(&mut self, truth: Truth, detection: Detection) {
        match (truth, detection.is_ood()) {
            (Truth::Id(_), false) => self.true_pos += 1,
            (Truth::Id(_), true) => self.false_neg += 1,
            (Truth::Ood, false) => self.false_pos += 1,
            (Truth::Ood, true) => self.true_neg += 1,
        }
    }

    pub fn add(&mut self, other: &ConfusionCounts) {
        self.true_pos += other.true_pos;
        self.false_pos += other.false_pos;
        self.true_neg += other.true_neg;
        self.false_neg += other.false_neg;
    }

    pub fn total(&self) -> u64 {
        self.true_pos + self.false_pos + self.true_neg + self.false_neg
    }
}

/// Detection F1 in percent, with ID as the positive class.
///
/// Zero when nothing was correctly detected as ID; an error when the
/// counts contain no positives at all (`TP+FP+FN = 0`), where F1 is
/// undefined.
pub fn f1(c: &ConfusionCounts) -> Result<f64> {
    if c.true_pos + c.false_pos + c.false_neg == 0 {
        return Err(Error::UndefinedF1);
    }
    if c.true_pos == 0 {
        return Ok(0.0);
    }
    let precision = c.true_pos as f64 / (c.true_pos + c.false_pos) as f64;
    let recall = c.true_pos as f64 / (c.true_pos + c.false_neg) as f64;
    Ok(100.0 * 2.0 * precision * recall / (precision + recall))
}

/// Task-id prediction accuracy in percent.
///
/// A record is correct when an ID sample of task `t` was detected as
/// `Id(t)`, or an OOD sample was detected as OOD. The sentinel `Id(0)`
/// never matches a real task.
pub fn task_accuracy(records: &[(Truth, Detection)]) -> Result<f64> {
    if records.is_empty() {
        return Err(Error::EmptyInput("task accuracy records"));
    }
    let correct = records
        .iter()
        .filter(|(truth, det)| match (truth, det) {
            (Truth::Id(t), Detection::Id(p)) => p == t,
            (Truth::Ood, Detection::Ood) => true,
            _ => false,
        })
        .count();
    Ok(100.0 * correct as f64 / records.len() as f64)
}

/// Per-checkpoint, per-task accuracies in percent.
///
/// Row `k` holds the accuracies on tasks `1..=k+1` measured right after
/// learning the `(k+1)`-th task, so occupancy is lower-triangular.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct AccuracyMatrix {
    rows: Vec<Vec<f64>>,
}

impl AccuracyMatrix {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Self {
        Self { rows }
    }

    /// Appends the accuracy row of the latest checkpoint.
    pub fn push_row(&mut self, accuracies: Vec<f64>) {
        self.rows.push(accuracies);
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn num_tasks(&self) -> usize {
        self.rows.last().map_or(0, Vec::len)
    }
}

/// Final average accuracy (ACC) and forgetting (FT), both in percent.
///
/// ACC is the mean of the final row. FT averages, over every task but the
/// last, the final accuracy minus the accuracy right after that task was
/// learned; negative values mean forgetting.
pub fn acc_and_ft(m: &AccuracyMatrix) -> Result<(f64, f64)> {
    let num_tasks = m.rows.len();
    if num_tasks == 0 {
        return Err(Error::EmptyInput("accuracy matrix"));
    }
    let final_row = m.rows.last().unwrap();
    if final_row.len() != num_tasks {
        return Err(Error::IncompleteMatrix {
            expected: num_tasks,
            got: final_row.len(),
        });
    }
    let acc = final_row.iter().sum::<f64>() / num_tasks as f64;
    if num_tasks == 1 {
        return Ok((acc, 0.0));
    }
    let mut drift_sum = 0.0;
    for j in 0..num_tasks - 1 {
        let just_learned = m.rows[j].get(j).copied().ok_or(Error::IncompleteMatrix {
            expected: j + 1,
            got: m.rows[j].len(),
        })?;
        drift_sum += final_row[j] - just_learned;
    }
    Ok((acc, drift_sum / (num_tasks - 1) as f64))
}

/// Which part of the stream a detection round belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "task")]
pub enum RoundRole {
    /// The round that introduces `task` as out-of-distribution data.
    Ood(usize),
    /// An in-distribution round inside `task`'s detection phase.
    Id(usize),
}

impl RoundRole {
    /// The task whose detection phase this round belongs to.
    pub fn phase_task(&self) -> usize {
        match self {
            RoundRole::Ood(t) | RoundRole::Id(t) => *t,
        }
    }

    pub fn is_ood_round(&self) -> bool {
        matches!(self, RoundRole::Ood(_))
    }

    /// Compact label used in CSV output, e.g. `ood:3` / `id:3`.
    pub fn label(&self) -> String {
        match self {
            RoundRole::Ood(t) => format!("ood:{t}"),
            RoundRole::Id(t) => format!("id:{t}"),
        }
    }
}

/// Everything accumulated for one detection round.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundStats {
    pub round: usize,
    pub role: RoundRole,
    pub counts: ConfusionCounts,
    pub task_correct: u64,
    pub total: u64,
    /// Layers visited summed over correctly task-identified ID samples.
    pub visits_on_correct_id: u64,
    pub correct_id_count: u64,
    pub ambiguous: u64,
    pub degenerate: bool,
}

impl RoundStats {
    pub fn new(round: usize, role: RoundRole) -> Self {
        Self {
            round,
            role,
            counts: ConfusionCounts::default(),
            task_correct: 0,
            total: 0,
            visits_on_correct_id: 0,
            correct_id_count: 0,
            ambiguous: 0,
            degenerate: false,
        }
    }

    /// Adds one per-sample record.
    pub fn record(&mut self, truth: Truth, detection: Detection, layers_visited: usize) {
        self.counts.record(truth, detection);
        self.total += 1;
        let task_match = match (truth, detection) {
            (Truth::Id(t), Detection::Id(p)) => p == t,
            (Truth::Ood, Detection::Ood) => true,
            _ => false,
        };
        if task_match {
            self.task_correct += 1;
        }
        if let (Truth::Id(t), Detection::Id(p)) = (truth, detection) {
            if p == t {
                self.visits_on_correct_id += layers_visited as u64;
                self.correct_id_count += 1;
            }
        }
    }

    pub fn task_accuracy(&self) -> Option<f64> {
        (self.total > 0).then(|| 100.0 * self.task_correct as f64 / self.total as f64)
    }
}

/// Collects round statistics over one experiment; single-owner, mergeable.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricsAccumulator {
    rounds: Vec<RoundStats>,
}

impl MetricsAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push_round(&mut self, round: RoundStats) {
        self.rounds.push(round);
    }

    pub fn rounds(&self) -> &[RoundStats] {
        &self.rounds
    }

    /// Union of two accumulators; associative and commutative because the
    /// result is keyed and ordered by round index.
    pub fn merge(mut self, other: MetricsAccumulator) -> MetricsAccumulator {
        self.rounds.extend(other.rounds);
        self.rounds.sort_by_key(|r| r.round);
        self
    }

    /// Aggregates into the final report. `matrix` carries the per-checkpoint
    /// accuracies of the task model; pass an empty matrix when no training
    /// checkpoints exist.
    pub fn finalize(&self, matrix: &AccuracyMatrix) -> MetricsReport {
        let mut per_round = Vec::with_capacity(self.rounds.len());
        for r in &self.rounds {
            per_round.push(RoundMetrics {
                round: r.round,
                role: r.role.label(),
                true_pos: r.counts.true_pos,
                false_pos: r.counts.false_pos,
                true_neg: r.counts.true_neg,
                false_neg: r.counts.false_neg,
                f1: f1(&r.counts).ok(),
                ta: r.task_accuracy(),
                degenerate: r.degenerate,
            });
        }

        // Pool rounds into detection phases, keyed by the introduced task.
        let mut phase_keys: Vec<usize> = self.rounds.iter().map(|r| r.role.phase_task()).collect();
        phase_keys.sort_unstable();
        phase_keys.dedup();
        let mut per_phase = Vec::with_capacity(phase_keys.len());
        for task in phase_keys {
            let mut counts = ConfusionCounts::default();
            let mut task_correct = 0;
            let mut total = 0;
            for r in self.rounds.iter().filter(|r| r.role.phase_task() == task) {
                counts.add(&r.counts);
                task_correct += r.task_correct;
                total += r.total;
            }
            per_phase.push(PhaseMetrics {
                task,
                true_pos: counts.true_pos,
                false_pos: counts.false_pos,
                true_neg: counts.true_neg,
                false_neg: counts.false_neg,
                f1: f1(&counts).ok(),
                ta: (total > 0).then(|| 100.0 * task_correct as f64 / total as f64),
            });
        }

        let f1_values: Vec<f64> = per_phase.iter().filter_map(|p| p.f1).collect();
        let ta_values: Vec<f64> = per_phase.iter().filter_map(|p| p.ta).collect();
        let (acc, ft) = match acc_and_ft(matrix) {
            Ok((a, f)) => (Some(a), Some(f)),
            Err(_) => (None, None),
        };
        let visits: u64 = self.rounds.iter().map(|r| r.visits_on_correct_id).sum();
        let correct_ids: u64 = self.rounds.iter().map(|r| r.correct_id_count).sum();

        MetricsReport {
            f1_mean: mean(&f1_values),
            ta_mean: mean(&ta_values),
            acc,
            ft,
            mean_layer_visits: (correct_ids > 0).then(|| visits as f64 / correct_ids as f64),
            ambiguous_count: self.rounds.iter().map(|r| r.ambiguous).sum(),
            degenerate_rounds: self.rounds.iter().filter(|r| r.degenerate).count() as u64,
            per_round,
            per_phase,
        }
    }
}

fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

/// Per-round entry of the metrics report.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct RoundMetrics {
    pub round: usize,
    pub role: String,
    pub true_pos: u64,
    pub false_pos: u64,
    pub true_neg: u64,
    pub false_neg: u64,
    pub f1: Option<f64>,
    pub ta: Option<f64>,
    pub degenerate: bool,
}

/// Pooled confusion of one detection phase (an OOD introduction round plus
/// the ID rounds that follow it).
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct PhaseMetrics {
    pub task: usize,
    pub true_pos: u64,
    pub false_pos: u64,
    pub true_neg: u64,
    pub false_neg: u64,
    pub f1: Option<f64>,
    pub ta: Option<f64>,
}

/// Final aggregate metrics of one experiment.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct MetricsReport {
    /// Mean detection F1 over phases, percent.
    pub f1_mean: Option<f64>,
    /// Mean task-id prediction accuracy over phases, percent.
    pub ta_mean: Option<f64>,
    /// Final average classification accuracy, percent.
    pub acc: Option<f64>,
    /// Forgetting: mean accuracy drift on earlier tasks, percent points.
    pub ft: Option<f64>,
    /// Mean layers visited per correctly task-identified ID sample.
    pub mean_layer_visits: Option<f64>,
    /// Detections that met several baseline thresholds at once.
    pub ambiguous_count: u64,
    /// OOD rounds whose detected-OOD training set was empty.
    pub degenerate_rounds: u64,
    pub per_round: Vec<RoundMetrics>,
    pub per_phase: Vec<PhaseMetrics>,
}
