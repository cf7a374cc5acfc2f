//! Hierarchical two-sample tests for continual out-of-distribution
//! detection in open-world task-incremental learning.
//!
//! A task-incremental model learns tasks from a stream whose samples may
//! come from tasks it has never seen. Each learned task gets a two-sample
//! test layer: a binary classifier distinguishing replay-buffer samples of
//! that task (sources) from incoming samples (targets) in feature space,
//! updated online, with a Clopper-Pearson interval around its windowed
//! accuracy deciding whether the incoming batch is in-distribution for the
//! task. Layers are cascaded: walking them in task order with an early
//! exit yields either an in-distribution verdict with a task id or an OOD
//! verdict after all layers reject, with no score threshold to tune.
//!
//! The crate provides the statistical kernels, the online classifiers, the
//! cascade in three variants (hierarchical, flat, single-layer), replay
//! memory, a small task model trained with experience replay, score-based
//! baselines with oracle threshold search, a replayable open-world stream
//! harness, metric reporting, and a `run`/`sweep`/`report` command-line
//! front end. See the `examples/` directory for one runnable walk-through
//! per capability.

pub mod baselines;
pub mod classifier;
pub mod config;
pub mod detection;
pub mod error;
pub mod memory;
pub mod metrics;
mod nn;
pub mod runner;
pub mod scenario;
pub mod seeding;
pub mod stats;
pub mod task_model;

pub use baselines::ScoreKind;
pub use classifier::{ClassifierConfig, OnlineClassifier};
pub use config::ExperimentConfig;
pub use detection::{
    Cascade, ClassifierSettings, Detection, DetectionOutcome, DetectorConfig, Strategy, TestLayer,
};
pub use error::{Error, Result};
pub use memory::{MemoryStore, Sample};
pub use metrics::{AccuracyMatrix, ConfusionCounts, MetricsReport, Truth};
pub use runner::{Experiment, ExperimentOutput};
pub use scenario::{
    generate_stream, run_experiment, DetectorChoice, ExperimentState, RoundLog, Stream,
    StreamConfig, SyntheticTaskSpec,
};
pub use task_model::{TaskModel, TrainConfig};
