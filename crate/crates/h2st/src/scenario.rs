//! Open-world stream construction and the closed loop that drives it:
//! detect each batch, classify accepted samples with the predicted task's
//! head, label detected-OOD samples, train the new task on them, and grow
//! the cascade and memory by one task per detection phase.
//!
//! Streams are replayable: every draw flows from the experiment's root
//! seed through fixed component labels, so rerunning a resolved config
//! reproduces identical round logs.

use std::collections::BTreeSet;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::baselines::{baseline_detect, score, threshold_search, ScoreKind, ThresholdTable};
use crate::detection::{Cascade, Detection, Strategy};
use crate::error::{Error, Result};
use crate::memory::{MemoryStore, Sample};
use crate::metrics::{
    AccuracyMatrix, MetricsAccumulator, MetricsReport, RoundRole, RoundStats, Truth,
};
use crate::task_model::TaskModel;

/// Shape of the open-world stream.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct StreamConfig {
    #[serde(default = "default_num_tasks")]
    pub num_tasks: usize,
    #[serde(default = "default_classes")]
    pub classes_per_task: usize,
    #[serde(default = "default_input_dim")]
    pub input_dim: usize,
    /// Samples in the round that introduces each new task (also the size
    /// of the bootstrap training set).
    #[serde(default = "default_ood_round")]
    pub ood_round_size: usize,
    #[serde(default = "default_id_round")]
    pub id_round_size: usize,
    #[serde(default = "default_id_rounds")]
    pub id_rounds_per_task: usize,
    /// Samples per detection step.
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    /// Length of the task-pure sample runs the stream is laid out in;
    /// defaults to `batch_size`. Larger blocks mean several consecutive
    /// detection steps share a task.
    #[serde(default)]
    pub task_block_size: Option<usize>,
    /// Held-out samples per task for accuracy checkpoints.
    #[serde(default = "default_eval")]
    pub eval_per_task: usize,
    /// Fraction of an introduction round's blocks drawn from already
    /// learned tasks instead of the new one.
    #[serde(default)]
    pub ood_mix_in: f64,
}

fn default_num_tasks() -> usize {
    5
}
fn default_classes() -> usize {
    2
}
fn default_input_dim() -> usize {
    32
}
fn default_ood_round() -> usize {
    600
}
fn default_id_round() -> usize {
    200
}
fn default_id_rounds() -> usize {
    2
}
fn default_batch() -> usize {
    20
}
fn default_eval() -> usize {
    200
}

impl Default for StreamConfig {
    fn default() -> Self {
        Self {
            num_tasks: default_num_tasks(),
            classes_per_task: default_classes(),
            input_dim: default_input_dim(),
            ood_round_size: default_ood_round(),
            id_round_size: default_id_round(),
            id_rounds_per_task: default_id_rounds(),
            batch_size: default_batch(),
            task_block_size: None,
            eval_per_task: default_eval(),
            ood_mix_in: 0.0,
        }
    }
}

impl StreamConfig {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("num_tasks", self.num_tasks),
            ("classes_per_task", self.classes_per_task),
            ("input_dim", self.input_dim),
            ("ood_round_size", self.ood_round_size),
            ("id_round_size", self.id_round_size),
            ("batch_size", self.batch_size),
            ("eval_per_task", self.eval_per_task),
        ];
        for (name, value) in counts {
            if value == 0 {
                return Err(Error::InvalidConfig(format!("{name} must be >= 1")));
            }
        }
        if !(0.0..1.0).contains(&self.ood_mix_in) {
            return Err(Error::InvalidConfig("ood_mix_in must be in [0,1)".into()));
        }
        if self.task_block_size == Some(0) {
            return Err(Error::InvalidConfig("task_block_size must be >= 1".into()));
        }
        Ok(())
    }

    /// Length of the task-pure runs the stream generators emit.
    pub fn block_size(&self) -> usize {
        self.task_block_size.unwrap_or(self.batch_size)
    }
}

/// Gaussian description of one synthetic task: one mean per class and a
/// shared isotropic standard deviation.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticTaskSpec {
    pub class_means: Vec<Vec<f64>>,
    pub noise_std: f64,
}

impl SyntheticTaskSpec {
    fn sample(&self, class: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        self.class_means[class]
            .iter()
            .map(|m| m + self.noise_std * rng.sample::<f64, _>(StandardNormal))
            .collect()
    }

    /// Generates task specs whose class means sit at `separation` from the
    /// origin along near-orthogonal random directions, redrawing any
    /// direction too close to an existing one.
    pub fn generate(
        num_tasks: usize,
        classes_per_task: usize,
        input_dim: usize,
        separation: f64,
        noise_std: f64,
        seed: u64,
    ) -> Vec<SyntheticTaskSpec> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut means: Vec<Vec<f64>> = Vec::new();
        for _ in 0..num_tasks * classes_per_task {
            loop {
                let raw: Vec<f64> = (0..input_dim)
                    .map(|_| rng.sample::<f64, _>(StandardNormal))
                    .collect();
                let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
                let candidate: Vec<f64> = raw.iter().map(|v| v / norm * separation).collect();
                let too_close = means.iter().any(|m| {
                    let dot: f64 = m.iter().zip(&candidate).map(|(a, b)| a * b).sum();
                    dot / (separation * separation) > 0.6
                });
                if !too_close {
                    means.push(candidate);
                    break;
                }
            }
        }
        means
            .chunks(classes_per_task)
            .map(|chunk| SyntheticTaskSpec {
                class_means: chunk.to_vec(),
                noise_std,
            })
            .collect()
    }
}

/// One detection round of the stream.
#[derive(Debug, Clone, PartialEq)]
pub struct Round {
    pub index: usize,
    pub role: RoundRole,
    pub samples: Vec<Sample>,
}

/// A fully materialized open-world stream.
#[derive(Debug, Clone, PartialEq)]
pub struct Stream {
    /// Task 1's training set; consumed before any detection happens.
    pub bootstrap: Vec<Sample>,
    pub rounds: Vec<Round>,
    /// Held-out evaluation sets, indexed by `task - 1`.
    pub eval_sets: Vec<Vec<Sample>>,
    /// Detection-step size the rounds were laid out for.
    pub batch_size: usize,
}

/// Builds the synthetic stream: task 1 bootstraps the model, then every
/// further task contributes one introduction round of its own samples
/// (optionally mixed with learned-task batches) followed by
/// `id_rounds_per_task` in-distribution rounds drawn uniformly over the
/// tasks learned at that point.
pub fn generate_stream(
    config: &StreamConfig,
    specs: &[SyntheticTaskSpec],
    seed: u64,
) -> Result<Stream> {
    config.validate()?;
    if specs.len() != config.num_tasks {
        return Err(Error::InvalidConfig(format!(
            "expected {} task specs, got {}",
            config.num_tasks,
            specs.len()
        )));
    }
    for spec in specs {
        if spec.class_means.len() != config.classes_per_task {
            return Err(Error::InvalidConfig(
                "task spec class count does not match classes_per_task".into(),
            ));
        }
        if !(spec.noise_std > 0.0) {
            return Err(Error::InvalidConfig("noise_std must be positive".into()));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let classes = config.classes_per_task;

    let make_set = |task: usize, n: usize, rng: &mut ChaCha8Rng| -> Vec<Sample> {
        (0..n)
            .map(|i| {
                let label = i % classes;
                Sample::new(specs[task - 1].sample(label, rng), task, label)
            })
            .collect()
    };

    let bootstrap = make_set(1, config.ood_round_size, &mut rng);
    let eval_sets: Vec<Vec<Sample>> = (1..=config.num_tasks)
        .map(|t| make_set(t, config.eval_per_task, &mut rng))
        .collect();

    let pure_batch = |task: usize, n: usize, rng: &mut ChaCha8Rng| -> Vec<Sample> {
        (0..n)
            .map(|_| {
                let label = rng.gen_range(0..classes);
                Sample::new(specs[task - 1].sample(label, rng), task, label)
            })
            .collect()
    };

    let block = config.block_size();
    let mut rounds = Vec::new();
    let mut index = 0;
    for new_task in 2..=config.num_tasks {
        index += 1;
        let mut samples = Vec::with_capacity(config.ood_round_size);
        let mut remaining = config.ood_round_size;
        while remaining > 0 {
            let n = remaining.min(block);
            let task = if config.ood_mix_in > 0.0 && rng.gen::<f64>() < config.ood_mix_in {
                rng.gen_range(1..new_task)
            } else {
                new_task
            };
            samples.extend(pure_batch(task, n, &mut rng));
            remaining -= n;
        }
        rounds.push(Round {
            index,
            role: RoundRole::Ood(new_task),
            samples,
        });

        for _ in 0..config.id_rounds_per_task {
            index += 1;
            let mut samples = Vec::with_capacity(config.id_round_size);
            let mut remaining = config.id_round_size;
            while remaining > 0 {
                let n = remaining.min(block);
                let task = rng.gen_range(1..=new_task);
                samples.extend(pure_batch(task, n, &mut rng));
                remaining -= n;
            }
            rounds.push(Round {
                index,
                role: RoundRole::Id(new_task),
                samples,
            });
        }
    }

    Ok(Stream {
        bootstrap,
        rounds,
        eval_sets,
        batch_size: config.batch_size,
    })
}

/// Reads `task_id,label,f0,...,f{d-1}` rows into samples.
pub fn load_feature_file(path: &Path) -> Result<Vec<Sample>> {
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| Error::MalformedData(format!("{}: {e}", path.display())))?;
    let headers = reader
        .headers()
        .map_err(|e| Error::MalformedData(e.to_string()))?
        .clone();
    if headers.len() < 3 || &headers[0] != "task_id" || &headers[1] != "label" {
        return Err(Error::MalformedData(
            "feature file must start with header task_id,label,f0,...".into(),
        ));
    }
    let dim = headers.len() - 2;
    let mut samples = Vec::new();
    for (row_idx, row) in reader.records().enumerate() {
        let row = row.map_err(|e| Error::MalformedData(e.to_string()))?;
        if row.len() != dim + 2 {
            return Err(Error::MalformedData(format!(
                "row {}: expected {} fields, got {}",
                row_idx + 1,
                dim + 2,
                row.len()
            )));
        }
        let parse_count = |s: &str, what: &str| -> Result<usize> {
            s.trim().parse().map_err(|_| {
                Error::MalformedData(format!("row {}: bad {what} `{s}`", row_idx + 1))
            })
        };
        let task_id = parse_count(&row[0], "task_id")?;
        let label = parse_count(&row[1], "label")?;
        if task_id == 0 {
            return Err(Error::MalformedData(format!(
                "row {}: task ids are 1-based",
                row_idx + 1
            )));
        }
        let mut features = Vec::with_capacity(dim);
        for v in row.iter().skip(2) {
            features.push(v.trim().parse::<f64>().map_err(|_| {
                Error::MalformedData(format!("row {}: bad feature `{v}`", row_idx + 1))
            })?);
        }
        samples.push(Sample::new(features, task_id, label));
    }
    if samples.is_empty() {
        return Err(Error::MalformedData("feature file holds no samples".into()));
    }
    Ok(samples)
}

/// Builds a stream from ingested samples instead of synthetic specs.
///
/// Each task's pool is shuffled once; the bootstrap and introduction
/// blocks walk the shuffled pool (cycling when it is short), the
/// evaluation set takes the stretch after the introduction block, and
/// in-distribution batches draw uniformly from the whole pool.
pub fn stream_from_samples(
    config: &StreamConfig,
    samples: &[Sample],
    seed: u64,
) -> Result<Stream> {
    config.validate()?;
    if samples.is_empty() {
        return Err(Error::EmptyInput("ingested samples"));
    }
    let dim = samples[0].features.len();
    if samples.iter().any(|s| s.features.len() != dim) {
        return Err(Error::MalformedData(
            "ingested samples have inconsistent dimensions".into(),
        ));
    }
    let mut pools: Vec<Vec<Sample>> = vec![Vec::new(); config.num_tasks];
    for s in samples {
        if s.task_id >= 1 && s.task_id <= config.num_tasks {
            pools[s.task_id - 1].push(s.clone());
        }
    }
    if let Some(missing) = pools.iter().position(Vec::is_empty) {
        return Err(Error::EmptyBuffer(missing + 1));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for pool in &mut pools {
        use rand::seq::SliceRandom;
        pool.shuffle(&mut rng);
    }

    let cycle = |pool: &[Sample], start: usize, n: usize| -> Vec<Sample> {
        (0..n)
            .map(|i| pool[(start + i) % pool.len()].clone())
            .collect()
    };

    let bootstrap = cycle(&pools[0], 0, config.ood_round_size);
    let eval_sets: Vec<Vec<Sample>> = pools
        .iter()
        .map(|p| cycle(p, config.ood_round_size % p.len(), config.eval_per_task))
        .collect();

    let block = config.block_size();
    let mut rounds = Vec::new();
    let mut index = 0;
    for new_task in 2..=config.num_tasks {
        index += 1;
        let mut intro_cursor = 0;
        let mut out = Vec::with_capacity(config.ood_round_size);
        let mut remaining = config.ood_round_size;
        while remaining > 0 {
            let n = remaining.min(block);
            if config.ood_mix_in > 0.0 && rng.gen::<f64>() < config.ood_mix_in {
                let task = rng.gen_range(1..new_task);
                let pool = &pools[task - 1];
                out.extend((0..n).map(|_| pool[rng.gen_range(0..pool.len())].clone()));
            } else {
                out.extend(cycle(&pools[new_task - 1], intro_cursor, n));
                intro_cursor += n;
            }
            remaining -= n;
        }
        rounds.push(Round {
            index,
            role: RoundRole::Ood(new_task),
            samples: out,
        });
        for _ in 0..config.id_rounds_per_task {
            index += 1;
            let mut out = Vec::with_capacity(config.id_round_size);
            let mut remaining = config.id_round_size;
            while remaining > 0 {
                let n = remaining.min(block);
                let task = rng.gen_range(1..=new_task);
                let pool = &pools[task - 1];
                out.extend((0..n).map(|_| pool[rng.gen_range(0..pool.len())].clone()));
                remaining -= n;
            }
            rounds.push(Round {
                index,
                role: RoundRole::Id(new_task),
                samples: out,
            });
        }
    }

    Ok(Stream {
        bootstrap,
        rounds,
        eval_sets,
        batch_size: config.batch_size,
    })
}

/// Which detector drives an experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DetectorChoice {
    H2st,
    C2st,
    SingleC2st,
    Baseline(ScoreKind),
}

impl DetectorChoice {
    pub const CASCADES: [DetectorChoice; 3] = [
        DetectorChoice::H2st,
        DetectorChoice::C2st,
        DetectorChoice::SingleC2st,
    ];

    /// Cascade strategy backing this choice, when it is cascade-based.
    pub fn strategy(&self) -> Option<Strategy> {
        match self {
            DetectorChoice::H2st => Some(Strategy::Hierarchical),
            DetectorChoice::C2st => Some(Strategy::Flat),
            DetectorChoice::SingleC2st => Some(Strategy::Single),
            DetectorChoice::Baseline(_) => None,
        }
    }

    pub fn label(&self) -> String {
        match self {
            DetectorChoice::H2st => "h2st".into(),
            DetectorChoice::C2st => "c2st".into(),
            DetectorChoice::SingleC2st => "single_c2st".into(),
            DetectorChoice::Baseline(kind) => format!("baseline:{}", kind.name()),
        }
    }
}

impl std::str::FromStr for DetectorChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "h2st" => Ok(DetectorChoice::H2st),
            "c2st" => Ok(DetectorChoice::C2st),
            "single_c2st" => Ok(DetectorChoice::SingleC2st),
            "baseline:msp" => Ok(DetectorChoice::Baseline(ScoreKind::Msp)),
            "baseline:max_logit" => Ok(DetectorChoice::Baseline(ScoreKind::MaxLogit)),
            "baseline:energy" => Ok(DetectorChoice::Baseline(ScoreKind::Energy)),
            "baseline:feature_norm" => Ok(DetectorChoice::Baseline(ScoreKind::FeatureNorm)),
            other => Err(Error::InvalidConfig(format!(
                "unknown strategy `{other}`; expected h2st, c2st, single_c2st, \
                 baseline:msp, baseline:max_logit, baseline:energy or baseline:feature_norm"
            ))),
        }
    }
}

impl std::fmt::Display for DetectorChoice {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.label())
    }
}

impl Serialize for DetectorChoice {
    fn serialize<S: serde::Serializer>(
        &self,
        serializer: S,
    ) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.label())
    }
}

impl<'de> Deserialize<'de> for DetectorChoice {
    fn deserialize<D: serde::Deserializer<'de>>(
        deserializer: D,
    ) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Per-sample record of one detection round.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampleRecord {
    pub sample_idx: usize,
    pub true_task: usize,
    pub true_label: usize,
    /// Whether the sample's task was already learned when it arrived.
    pub truth: Truth,
    pub detection: Detection,
    /// Class predicted with the detected task's head; absent for OOD
    /// verdicts and for the sentinel task id 0.
    pub pred_label: Option<usize>,
    pub layers_visited: usize,
}

/// Everything recorded about one detection round.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundLog {
    pub round: usize,
    pub role: RoundRole,
    pub records: Vec<SampleRecord>,
    /// Detections that met several baseline thresholds at once.
    pub ambiguous: u64,
    /// ID samples wrongly flagged OOD in an introduction round; they are
    /// excluded from the new task's training data.
    pub excluded_mislabeled: usize,
    /// True when an introduction round yielded no detected-OOD samples,
    /// so no new task was trained.
    pub degenerate: bool,
}

/// Mutable state of one running experiment.
#[derive(Debug, Clone)]
pub struct ExperimentState {
    pub model: TaskModel,
    pub store: MemoryStore,
    /// Present for cascade-based detectors, absent for score baselines.
    pub cascade: Option<Cascade>,
    pub choice: DetectorChoice,
    thresholds: Option<ThresholdTable>,
}

impl ExperimentState {
    pub fn new(
        model: TaskModel,
        store: MemoryStore,
        cascade: Option<Cascade>,
        choice: DetectorChoice,
    ) -> Self {
        Self {
            model,
            store,
            cascade,
            choice,
            thresholds: None,
        }
    }
}

/// Runs the detection rounds of `stream` against a bootstrapped state.
///
/// The model must already be trained on task 1, with its exemplars stored
/// and (for cascade detectors) the first layer in place; [`Experiment`]
/// arranges that. After each introduction round, samples the detector
/// flagged OOD receive their true labels, mislabeled ID samples among them
/// are dropped, and the remainder trains the new task. An introduction
/// round with no detected OOD is logged as degenerate and skipped.
pub fn run_experiment(
    stream: &Stream,
    state: &mut ExperimentState,
    accumulator: &mut MetricsAccumulator,
) -> Result<(Vec<RoundLog>, MetricsReport)> {
    if !state.model.has_task(1) {
        return Err(Error::InvalidConfig(
            "run_experiment expects a model bootstrapped on task 1".into(),
        ));
    }
    let mut matrix = AccuracyMatrix::new();
    matrix.push_row(eval_row(&state.model, &stream.eval_sets)?);

    let mut logs = Vec::with_capacity(stream.rounds.len());
    for round in &stream.rounds {
        let mut log = process_round(round, stream.batch_size, state)?;

        if let RoundRole::Ood(new_task) = round.role {
            let (training_set, excluded) =
                detected_ood_training_set(round, &log.records, new_task);
            log.excluded_mislabeled = excluded;
            if training_set.is_empty() {
                log.degenerate = true;
            } else {
                state
                    .model
                    .train_increment(new_task, &training_set, &mut state.store)?;
                if let Some(cascade) = state.cascade.as_mut() {
                    cascade.on_task_learned(new_task, state.model.feature_dim())?;
                }
                matrix.push_row(eval_row(&state.model, &stream.eval_sets)?);
            }
        }

        let mut stats = RoundStats::new(round.index, round.role);
        for record in &log.records {
            stats.record(record.truth, record.detection, record.layers_visited);
        }
        stats.ambiguous = log.ambiguous;
        stats.degenerate = log.degenerate;
        accumulator.push_round(stats);
        logs.push(log);
    }
    let report = accumulator.finalize(&matrix);
    Ok((logs, report))
}

fn eval_row(model: &TaskModel, eval_sets: &[Vec<Sample>]) -> Result<Vec<f64>> {
    let mut row = Vec::new();
    for task in model.tasks() {
        let eval = eval_sets.get(task - 1).ok_or(Error::UnknownTask(task))?;
        row.push(100.0 * model.evaluate_accuracy(eval)?);
    }
    Ok(row)
}

/// Splits an introduction round's flagged-OOD samples into the new task's
/// training set and the count of mislabeled ID samples excluded from it.
fn detected_ood_training_set(
    round: &Round,
    records: &[SampleRecord],
    new_task: usize,
) -> (Vec<Sample>, usize) {
    let mut training = Vec::new();
    let mut excluded = 0;
    for (sample, record) in round.samples.iter().zip(records) {
        if record.detection.is_ood() {
            if sample.task_id == new_task {
                training.push(sample.clone());
            } else {
                excluded += 1;
            }
        }
    }
    (training, excluded)
}

fn process_round(
    round: &Round,
    batch_size: usize,
    state: &mut ExperimentState,
) -> Result<RoundLog> {
    let learned: BTreeSet<usize> = state.model.tasks().into_iter().collect();
    if let DetectorChoice::Baseline(kind) = state.choice {
        state.thresholds = Some(fit_thresholds(kind, round, state, &learned)?);
    }

    let mut records = Vec::with_capacity(round.samples.len());
    let mut ambiguous = 0u64;
    for chunk in round.samples.chunks(batch_size) {
        match state.choice {
            DetectorChoice::Baseline(_) => {
                let table = state.thresholds.as_ref().unwrap();
                for sample in chunk {
                    let verdict = baseline_detect(table, &state.model, &sample.features)?;
                    if verdict.ambiguous {
                        ambiguous += 1;
                    }
                    records.push(make_record(
                        records.len(),
                        sample,
                        &learned,
                        verdict.detection,
                        learned.len(),
                        &state.model,
                    )?);
                }
            }
            _ => {
                let cascade = state.cascade.as_mut().ok_or(Error::InvalidConfig(
                    "cascade detector chosen but no cascade present".into(),
                ))?;
                let targets: Vec<Vec<f64>> =
                    chunk.iter().map(|s| s.features.clone()).collect();
                let outcome = cascade.detect(&targets, &mut state.store, &state.model)?;
                for sample in chunk {
                    records.push(make_record(
                        records.len(),
                        sample,
                        &learned,
                        outcome.detection,
                        outcome.layers_visited,
                        &state.model,
                    )?);
                }
            }
        }
    }

    Ok(RoundLog {
        round: round.index,
        role: round.role,
        records,
        ambiguous,
        excluded_mislabeled: 0,
        degenerate: false,
    })
}

fn make_record(
    sample_idx: usize,
    sample: &Sample,
    learned: &BTreeSet<usize>,
    detection: Detection,
    layers_visited: usize,
    model: &TaskModel,
) -> Result<SampleRecord> {
    let truth = if learned.contains(&sample.task_id) {
        Truth::Id(sample.task_id)
    } else {
        Truth::Ood
    };
    let pred_label = match detection {
        Detection::Id(t) if learned.contains(&t) => {
            Some(model.predict_label(&sample.features, t)?)
        }
        _ => None,
    };
    Ok(SampleRecord {
        sample_idx,
        true_task: sample.task_id,
        true_label: sample.label,
        truth,
        detection,
        pred_label,
        layers_visited,
    })
}

/// Fits one threshold per learned task for the round about to be detected.
///
/// ID scores for task `t` pool its replay buffer with the round's true
/// task-`t` samples (labels are treated as known, matching the oracle
/// search protocol). OOD scores are the round's true-OOD samples; rounds
/// without any fall back to the other tasks' buffers as OOD stand-ins.
fn fit_thresholds(
    kind: ScoreKind,
    round: &Round,
    state: &ExperimentState,
    learned: &BTreeSet<usize>,
) -> Result<ThresholdTable> {
    let model = &state.model;
    let mut table = ThresholdTable::new(kind);
    for &task in learned {
        let mut id_scores = Vec::new();
        if let Some(buffer) = state.store.buffer(task) {
            for s in buffer {
                id_scores.push(sample_score(model, kind, &s.features, task)?);
            }
        }
        let mut ood_scores = Vec::new();
        for s in &round.samples {
            if learned.contains(&s.task_id) {
                if s.task_id == task {
                    id_scores.push(sample_score(model, kind, &s.features, task)?);
                }
            } else {
                ood_scores.push(sample_score(model, kind, &s.features, task)?);
            }
        }
        if ood_scores.is_empty() {
            for &other in learned.iter().filter(|&&t| t != task) {
                if let Some(buffer) = state.store.buffer(other) {
                    for s in buffer {
                        ood_scores.push(sample_score(model, kind, &s.features, task)?);
                    }
                }
            }
        }
        table.set(task, threshold_search(&id_scores, &ood_scores)?);
    }
    Ok(table)
}

fn sample_score(model: &TaskModel, kind: ScoreKind, x: &[f64], task: usize) -> Result<f64> {
    let logits = model.logits(x, task)?;
    let feature = model.extract(x)?;
    score(kind, &logits, &feature)
}
