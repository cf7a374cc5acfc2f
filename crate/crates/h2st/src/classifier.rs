//! The online source-target classifier: a fully connected network with
//! rectified-linear hidden layers and a single sigmoid output, trained one
//! gradient step at a time on binary cross-entropy as detection batches
//! arrive.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{sigmoid, softplus, DenseLayer, ReluStack};

/// Configuration of one source-target classifier.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ClassifierConfig {
    pub input_dim: usize,
    /// Hidden layer widths; one entry per hidden layer.
    #[serde(default = "default_hidden")]
    pub hidden_layers: Vec<usize>,
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_hidden() -> Vec<usize> {
    vec![128]
}

fn default_lr() -> f64 {
    0.01
}

impl ClassifierConfig {
    pub fn new(input_dim: usize, seed: u64) -> Self {
        Self {
            input_dim,
            hidden_layers: default_hidden(),
            learning_rate: default_lr(),
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(Error::InvalidConfig("classifier input_dim must be >= 1".into()));
        }
        if self.hidden_layers.is_empty() || self.hidden_layers.contains(&0) {
            return Err(Error::InvalidConfig(
                "classifier needs at least one hidden layer of >= 1 units".into(),
            ));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::InvalidConfig(
                "classifier learning_rate must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Binary classifier distinguishing replay-buffer (source, label 0) from
/// newly observed (target, label 1) feature vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct OnlineClassifier {
    hidden: ReluStack,
    output: DenseLayer,
    config: ClassifierConfig,
}

impl OnlineClassifier {
    /// Xavier-initialized network; identical seeds give identical parameters.
    pub fn new(config: ClassifierConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let hidden = ReluStack::xavier(config.input_dim, &config.hidden_layers, &mut rng);
        let output = DenseLayer::xavier(*config.hidden_layers.last().unwrap(), 1, &mut rng);
        Ok(Self {
            hidden,
            output,
            config,
        })
    }

    pub fn config(&self) -> &ClassifierConfig {
        &self.config
    }

    pub fn input_dim(&self) -> usize {
        self.config.input_dim
    }

    /// Total number of weights and biases.
    pub fn param_count(&self) -> usize {
        self.hidden.param_count() + self.output.param_count()
    }

    fn logit(&self, feature: &[f64]) -> Result<f64> {
        self.hidden.check_input(feature)?;
        let h = self.hidden.output(feature);
        Ok(self.output.forward(&h)[0])
    }

    /// Probability that `feature` is a target sample, strictly inside (0,1).
    pub fn predict(&self, feature: &[f64]) -> Result<f64> {
        Ok(sigmoid(self.logit(feature)?).clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0))
    }

    /// Hard source/target label: 1 iff the probability exceeds 1/2.
    pub fn predict_label(&self, feature: &[f64]) -> Result<u8> {
        Ok(u8::from(self.predict(feature)? > 0.5))
    }

    /// One full-batch gradient step on binary cross-entropy.
    ///
    /// Labels are 0 for source samples and 1 for targets. Returns the mean
    /// loss over the batch *before* the step.
    pub fn update(&mut self, batch: &[(&[f64], u8)]) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::EmptyInput("classifier update batch"));
        }
        let mut hidden_grads = self.hidden.zero_grads();
        let mut output_grad = self.output.zero_grad();
        let mut loss_sum = 0.0;
        for &(feature, label) in batch {
            self.hidden.check_input(feature)?;
            let trace = self.hidden.forward_trace(feature);
            let h = trace.last().unwrap();
            let z = self.output.forward(h)[0];
            let y = f64::from(label);
            // BCE in log-sum-exp form: softplus(z) − y·z
            loss_sum += softplus(z) - y * z;
            let dz = sigmoid(z) - y;
            let grad_h = self.output.backward(h, &[dz], &mut output_grad);
            self.hidden.backward(&trace, &grad_h, &mut hidden_grads);
        }
        let scale = 1.0 / batch.len() as f64;
        self.hidden
            .apply_step(&hidden_grads, self.config.learning_rate, scale);
        self.output
            .apply_step(&output_grad, self.config.learning_rate, scale);
        Ok(loss_sum * scale)
    }

    /// Mean binary cross-entropy of the current parameters on `batch`.
    pub fn loss(&self, batch: &[(&[f64], u8)]) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::EmptyInput("classifier loss batch"));
        }
        let mut sum = 0.0;
        for &(feature, label) in batch {
            let z = self.logit(feature)?;
            sum += softplus(z) - f64::from(label) * z;
        }
        Ok(sum / batch.len() as f64)
    }

    fn get_param(&self, idx: usize) -> f64 {
        if idx < self.hidden.param_count() {
            self.hidden.get_param(idx)
        } else {
            self.output.get_param(idx - self.hidden.param_count())
        }
    }

    fn set_param(&mut self, idx: usize, value: f64) {
        if idx < self.hidden.param_count() {
            self.hidden.set_param(idx, value);
        } else {
            self.output.set_param(idx - self.hidden.param_count(), value);
        }
    }

    #[cfg(test)]
    pub(crate) fn zero_all_params(&mut self) {
        for idx in 0..self.param_count() {
            self.set_param(idx, 0.0);
        }
    }

    #[cfg(test)]
    pub(crate) fn first_layer_weights(&self) -> &[f64] {
        &self.hidden.layers[0].weights
    }
}

/// Analytic-vs-numeric gradient comparison used by tests and the
/// acceptance suite. Returns the maximum relative error over parameters.
pub fn gradient_check(config: &ClassifierConfig, batch: &[(&[f64], u8)], eps: f64) -> Result<f64> {
    let clf = OnlineClassifier::new(config.clone())?;

    // A unit-learning-rate step moves each parameter by exactly minus its
    // mean-batch gradient, which recovers the analytic gradient.
    let mut probe = clf.clone();
    probe.config.learning_rate = 1.0;
    probe.update(batch)?;
    let mut max_rel = 0.0f64;
    for idx in 0..clf.param_count() {
        let analytic = clf.get_param(idx) - probe.get_param(idx); // lr=1 step is exactly the mean gradient
        let mut plus = clf.clone();
        plus.set_param(idx, plus.get_param(idx) + eps);
        let mut minus = clf.clone();
        minus.set_param(idx, minus.get_param(idx) - eps);
        let numeric = (plus.loss(batch)? - minus.loss(batch)?) / (2.0 * eps);
        let denom = numeric.abs().max(analytic.abs()).max(1e-8);
        max_rel = max_rel.max((numeric - analytic).abs() / denom);
    }
    Ok(max_rel)
}
