//! Task-specific two-sample test layers and the three detector strategies:
//! the hierarchical cascade with early exit, the flat variant that runs
//! every layer, and the single-layer variant with one unified classifier.
//!
//! A layer watches one task. Each detection step predicts source/target
//! labels with the layer's online classifier, updates the classifier, pushes
//! the per-pair correctness into the sliding window, and rejects when 1/2
//! falls outside the Clopper-Pearson interval of the windowed accuracy.

use serde::{Deserialize, Serialize};

use crate::classifier::{ClassifierConfig, OnlineClassifier};
use crate::error::{Error, Result};
use crate::memory::MemoryStore;
use crate::seeding::component_seed;
use crate::stats::{clopper_pearson, WindowState};
use crate::task_model::TaskModel;

/// Window size and significance level of every test layer.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct DetectorConfig {
    #[serde(default = "default_window")]
    pub window_size: usize,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
}

fn default_window() -> usize {
    20
}

fn default_alpha() -> f64 {
    0.05
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            window_size: default_window(),
            alpha: default_alpha(),
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window_size == 0 {
            return Err(Error::InvalidConfig("window_size must be >= 1".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidConfig("alpha must be in (0,1)".into()));
        }
        Ok(())
    }
}

/// Hidden layout and learning rate shared by all test-layer classifiers;
/// each layer gets its own derived seed.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ClassifierSettings {
    #[serde(default = "default_clf_hidden")]
    pub hidden_layers: Vec<usize>,
    #[serde(default = "default_clf_lr")]
    pub learning_rate: f64,
}

fn default_clf_hidden() -> Vec<usize> {
    vec![128]
}

fn default_clf_lr() -> f64 {
    0.01
}

impl Default for ClassifierSettings {
    fn default() -> Self {
        Self {
            hidden_layers: default_clf_hidden(),
            learning_rate: default_clf_lr(),
        }
    }
}

/// Verdict of one detection step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Detection {
    /// In-distribution with the predicted task id. The single-layer
    /// strategy reports `Id(0)`: in-distribution with no task identity.
    Id(usize),
    Ood,
}

impl Detection {
    pub fn is_ood(&self) -> bool {
        matches!(self, Detection::Ood)
    }

    pub fn task_id(&self) -> Option<usize> {
        match self {
            Detection::Id(t) => Some(*t),
            Detection::Ood => None,
        }
    }
}

/// A detection verdict plus the number of layers it visited.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DetectionOutcome {
    pub detection: Detection,
    pub layers_visited: usize,
}

/// One task-specific two-sample test: classifier, window and test settings.
#[derive(Debug, Clone)]
pub struct TestLayer {
    task_index: usize,
    classifier: OnlineClassifier,
    window: WindowState,
    config: DetectorConfig,
}

impl TestLayer {
    pub fn new(
        task_index: usize,
        classifier_config: ClassifierConfig,
        config: DetectorConfig,
    ) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            task_index,
            classifier: OnlineClassifier::new(classifier_config)?,
            window: WindowState::new(config.window_size),
            config,
        })
    }

    pub fn task_index(&self) -> usize {
        self.task_index
    }

    pub fn window(&self) -> &WindowState {
        &self.window
    }

    pub fn classifier(&self) -> &OnlineClassifier {
        &self.classifier
    }

    /// One detection step over matched source/target feature batches.
    ///
    /// Predicts source/target labels, takes one online classifier step
    /// (sources as 0, targets as 1), pushes one correctness pair per
    /// matched index, and returns `true` iff the test rejects: 1/2 outside
    /// the Clopper-Pearson interval of the windowed accuracy over the
    /// pairs actually available.
    pub fn step(
        &mut self,
        source_features: &[Vec<f64>],
        target_features: &[Vec<f64>],
    ) -> Result<bool> {
        if source_features.is_empty() || target_features.is_empty() {
            return Err(Error::EmptyInput("layer step needs sources and targets"));
        }
        if source_features.len() != target_features.len() {
            return Err(Error::DimensionMismatch {
                expected: target_features.len(),
                got: source_features.len(),
            });
        }

        // Step 1: source-target prediction with the current classifier.
        let mut correctness = Vec::with_capacity(source_features.len());
        for (src, tgt) in source_features.iter().zip(target_features) {
            let src_correct = self.classifier.predict_label(src)? == 0;
            let tgt_correct = self.classifier.predict_label(tgt)? == 1;
            correctness.push((src_correct, tgt_correct));
        }

        // Step 2: one online update, sources labeled 0 and targets 1.
        let mut batch: Vec<(&[f64], u8)> = Vec::with_capacity(2 * source_features.len());
        batch.extend(source_features.iter().map(|f| (f.as_slice(), 0u8)));
        batch.extend(target_features.iter().map(|f| (f.as_slice(), 1u8)));
        self.classifier.update(&batch)?;

        // Step 3: calibrated detection on the windowed accuracy.
        for (src_correct, tgt_correct) in correctness {
            self.window.push(src_correct, tgt_correct);
        }
        window_rejects(&self.window, self.config.alpha)
    }
}

/// The calibrated test: reject iff 1/2 lies outside the CP interval of
/// `round(2n·μ̂)` successes in `2n` trials, `n` the pairs available.
fn window_rejects(window: &WindowState, alpha: f64) -> Result<bool> {
    let (mu, pairs) = window.mu_hat()?;
    let trials = 2 * pairs as u64;
    let successes = (trials as f64 * mu).round() as u64;
    let interval = clopper_pearson(successes, trials, alpha)?;
    Ok(!interval.contains(0.5))
}

/// Detector strategy of a cascade.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// Walk layers in task order, exiting at the first acceptance.
    Hierarchical,
    /// Run every layer, accept the lowest-index non-rejecting one.
    Flat,
    /// One unified layer over all tasks; no task identity.
    Single,
}

/// An ordered stack of test layers sharing one strategy.
#[derive(Debug, Clone)]
pub struct Cascade {
    strategy: Strategy,
    layers: Vec<TestLayer>,
    detector_config: DetectorConfig,
    classifier_settings: ClassifierSettings,
    seed: u64,
}

impl Cascade {
    pub fn new(
        strategy: Strategy,
        detector_config: DetectorConfig,
        classifier_settings: ClassifierSettings,
        seed: u64,
    ) -> Result<Self> {
        detector_config.validate()?;
        Ok(Self {
            strategy,
            layers: Vec::new(),
            detector_config,
            classifier_settings,
            seed,
        })
    }

    pub fn strategy(&self) -> Strategy {
        self.strategy
    }

    pub fn layers(&self) -> &[TestLayer] {
        &self.layers
    }

    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    fn layer_config(&self, task_index: usize, input_dim: usize) -> ClassifierConfig {
        ClassifierConfig {
            input_dim,
            hidden_layers: self.classifier_settings.hidden_layers.clone(),
            learning_rate: self.classifier_settings.learning_rate,
            seed: component_seed(self.seed, &format!("layer:{task_index}")),
        }
    }

    /// Appends a fresh test layer watching `task`. Existing layers are
    /// untouched. Only hierarchical and flat cascades grow per task, and
    /// task indices must keep ascending so the walk order stays the task
    /// order.
    pub fn add_layer(&mut self, task: usize, input_dim: usize) -> Result<()> {
        if self.strategy == Strategy::Single {
            return Err(Error::InvalidConfig(
                "a single-strategy cascade keeps exactly one layer".into(),
            ));
        }
        if let Some(last) = self.layers.last() {
            if task <= last.task_index {
                return Err(Error::InvalidConfig(format!(
                    "layer for task {task} must come after task {}",
                    last.task_index
                )));
            }
        }
        let layer = TestLayer::new(
            task,
            self.layer_config(task, input_dim),
            self.detector_config,
        )?;
        self.layers.push(layer);
        Ok(())
    }

    /// Reacts to a newly learned task: grows hierarchical and flat
    /// cascades by one layer; creates the unified layer once for single.
    pub fn on_task_learned(&mut self, task: usize, input_dim: usize) -> Result<()> {
        match self.strategy {
            Strategy::Hierarchical | Strategy::Flat => self.add_layer(task, input_dim),
            Strategy::Single => {
                if self.layers.is_empty() {
                    let layer = TestLayer::new(
                        0,
                        self.layer_config(0, input_dim),
                        self.detector_config,
                    )?;
                    self.layers.push(layer);
                }
                Ok(())
            }
        }
    }

    /// Runs one detection step for a batch of raw target inputs.
    ///
    /// Target features are extracted once; sources are drawn per layer to
    /// match the target quantity. The verdict applies to the whole batch.
    pub fn detect(
        &mut self,
        target_inputs: &[Vec<f64>],
        store: &mut MemoryStore,
        model: &TaskModel,
    ) -> Result<DetectionOutcome> {
        if target_inputs.is_empty() {
            return Err(Error::EmptyInput("detection targets"));
        }
        if self.layers.is_empty() {
            return Err(Error::EmptyInput("cascade has no layers"));
        }
        let target_features: Vec<Vec<f64>> = target_inputs
            .iter()
            .map(|x| model.extract(x))
            .collect::<Result<_>>()?;
        let n = target_features.len();

        match self.strategy {
            Strategy::Hierarchical => {
                let total = self.layers.len();
                for (pos, layer) in self.layers.iter_mut().enumerate() {
                    let sources = store.draw(layer.task_index, n)?;
                    let source_features = extract_all(model, &sources)?;
                    if !layer.step(&source_features, &target_features)? {
                        return Ok(DetectionOutcome {
                            detection: Detection::Id(layer.task_index),
                            layers_visited: pos + 1,
                        });
                    }
                }
                Ok(DetectionOutcome {
                    detection: Detection::Ood,
                    layers_visited: total,
                })
            }
            Strategy::Flat => {
                let mut accepted: Option<usize> = None;
                for layer in self.layers.iter_mut() {
                    let sources = store.draw(layer.task_index, n)?;
                    let source_features = extract_all(model, &sources)?;
                    let rejected = layer.step(&source_features, &target_features)?;
                    if !rejected && accepted.is_none() {
                        accepted = Some(layer.task_index);
                    }
                }
                Ok(DetectionOutcome {
                    detection: accepted.map_or(Detection::Ood, Detection::Id),
                    layers_visited: self.layers.len(),
                })
            }
            Strategy::Single => {
                let sources = store.draw_even(n)?;
                let source_features = extract_all(model, &sources)?;
                let layer = &mut self.layers[0];
                let rejected = layer.step(&source_features, &target_features)?;
                Ok(DetectionOutcome {
                    detection: if rejected {
                        Detection::Ood
                    } else {
                        Detection::Id(0)
                    },
                    layers_visited: 1,
                })
            }
        }
    }
}

fn extract_all(model: &TaskModel, samples: &[crate::memory::Sample]) -> Result<Vec<Vec<f64>>> {
    samples.iter().map(|s| model.extract(&s.features)).collect()
}
