//! The continually trained task model: a shared rectified-linear feature
//! extractor plus one linear classification head per learned task, trained
//! with experience replay. Detectors consume its features, score-based
//! baselines its logits.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::memory::{MemoryStore, Sample};
use crate::nn::{DenseGrad, DenseLayer, ReluStack};

/// Magic prefix of the checkpoint format.
const CHECKPOINT_MAGIC: &[u8; 9] = b"H2ST-MDL\0";
const CHECKPOINT_VERSION: u8 = 1;

/// Training configuration for the task model.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    /// Extractor hidden widths; the last entry is the feature dimension.
    #[serde(default = "default_extractor")]
    pub hidden_layers: Vec<usize>,
    #[serde(default = "default_model_lr")]
    pub learning_rate: f64,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    /// Replay batch size as a fraction of the current-task batch.
    #[serde(default = "default_replay_ratio")]
    pub replay_ratio: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_extractor() -> Vec<usize> {
    vec![64, 32]
}

fn default_model_lr() -> f64 {
    0.05
}

fn default_epochs() -> usize {
    10
}

fn default_batch() -> usize {
    32
}

fn default_replay_ratio() -> f64 {
    1.0
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            hidden_layers: default_extractor(),
            learning_rate: default_model_lr(),
            epochs: default_epochs(),
            batch_size: default_batch(),
            replay_ratio: default_replay_ratio(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if self.hidden_layers.is_empty() || self.hidden_layers.contains(&0) {
            return Err(Error::InvalidConfig(
                "task model needs at least one hidden layer of >= 1 units".into(),
            ));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::InvalidConfig("task model learning_rate must be positive".into()));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::InvalidConfig("epochs and batch_size must be >= 1".into()));
        }
        if !(self.replay_ratio >= 0.0) {
            return Err(Error::InvalidConfig("replay_ratio must be non-negative".into()));
        }
        Ok(())
    }
}

/// Per-epoch mean training loss.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSummary {
    pub task: usize,
    pub epoch_losses: Vec<f64>,
}

/// Shared extractor with per-task linear heads.
#[derive(Debug, Clone)]
pub struct TaskModel {
    extractor: ReluStack,
    heads: BTreeMap<usize, DenseLayer>,
    config: TrainConfig,
    input_dim: usize,
    rng: ChaCha8Rng,
}

impl TaskModel {
    pub fn new(input_dim: usize, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        if input_dim == 0 {
            return Err(Error::InvalidConfig("input_dim must be >= 1".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let extractor = ReluStack::xavier(input_dim, &config.hidden_layers, &mut rng);
        Ok(Self {
            extractor,
            heads: BTreeMap::new(),
            config,
            input_dim,
            rng,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    /// Dimension of the feature vector fed to detectors.
    pub fn feature_dim(&self) -> usize {
        self.extractor.output_dim()
    }

    /// Task ids with a trained head, ascending.
    pub fn tasks(&self) -> Vec<usize> {
        self.heads.keys().copied().collect()
    }

    pub fn has_task(&self, task: usize) -> bool {
        self.heads.contains_key(&task)
    }

    /// Feature map of the extractor's last hidden layer.
    pub fn extract(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.extractor.check_input(x)?;
        Ok(self.extractor.output(x))
    }

    /// Raw pre-softmax outputs of one task head.
    pub fn logits(&self, x: &[f64], task: usize) -> Result<Vec<f64>> {
        let head = self.heads.get(&task).ok_or(Error::UnknownTask(task))?;
        Ok(head.forward(&self.extract(x)?))
    }

    /// Class prediction under the given task head; ties break to the
    /// lower class index.
    pub fn predict_label(&self, x: &[f64], task: usize) -> Result<usize> {
        let logits = self.logits(x, task)?;
        let mut best = 0;
        for (i, &v) in logits.iter().enumerate() {
            if v > logits[best] {
                best = i;
            }
        }
        Ok(best)
    }

    /// Fraction of samples whose label is recovered with the true task's
    /// head.
    pub fn evaluate_accuracy(&self, samples: &[Sample]) -> Result<f64> {
        if samples.is_empty() {
            return Err(Error::EmptyInput("evaluation samples"));
        }
        let mut correct = 0usize;
        for s in samples {
            if self.predict_label(&s.features, s.task_id)? == s.label {
                correct += 1;
            }
        }
        Ok(correct as f64 / samples.len() as f64)
    }

    /// Trains one task increment with experience replay and stores
    /// class-balanced exemplars afterwards.
    ///
    /// Every gradient step mixes the current-task batch with a replay batch
    /// of `replay_ratio` times its size drawn evenly over the buffers of
    /// previously learned tasks; the first task trains without replay. The
    /// head for `task` is created on first sight, sized by the largest
    /// label in `data`.
    pub fn train_increment(
        &mut self,
        task: usize,
        data: &[Sample],
        store: &mut MemoryStore,
    ) -> Result<TrainingSummary> {
        if data.is_empty() {
            return Err(Error::EmptyInput("training data"));
        }
        for s in data {
            if s.task_id != task {
                return Err(Error::TaskMismatch {
                    expected: task,
                    got: s.task_id,
                });
            }
        }
        if !self.heads.contains_key(&task) {
            let classes = data.iter().map(|s| s.label).max().unwrap() + 1;
            let head = DenseLayer::xavier(self.feature_dim(), classes, &mut self.rng);
            self.heads.insert(task, head);
        }
        let replay_available = store.tasks().iter().any(|&t| t != task && store.buffer_len(t) > 0);

        let mut epoch_losses = Vec::with_capacity(self.config.epochs);
        let mut order: Vec<usize> = (0..data.len()).collect();
        for _ in 0..self.config.epochs {
            order.shuffle(&mut self.rng);
            let mut loss_sum = 0.0;
            let mut loss_count = 0usize;
            for chunk in order.chunks(self.config.batch_size) {
                let mut items: Vec<(usize, Sample)> = chunk
                    .iter()
                    .map(|&i| (task, data[i].clone()))
                    .collect();
                if replay_available {
                    let replay_n =
                        (chunk.len() as f64 * self.config.replay_ratio).round() as usize;
                    if replay_n > 0 {
                        for s in self.draw_replay(store, task, replay_n)? {
                            items.push((s.task_id, s));
                        }
                    }
                }
                let refs: Vec<(usize, &Sample)> =
                    items.iter().map(|(t, s)| (*t, s)).collect();
                let (loss, ext_grads, head_grads) = self.batch_gradients(&refs)?;
                // batch_gradients folds the batch mean into the gradients.
                self.extractor
                    .apply_step(&ext_grads, self.config.learning_rate, 1.0);
                for (t, grad) in &head_grads {
                    self.heads
                        .get_mut(t)
                        .unwrap()
                        .apply_step(grad, self.config.learning_rate, 1.0);
                }
                loss_sum += loss * refs.len() as f64;
                loss_count += refs.len();
            }
            epoch_losses.push(loss_sum / loss_count as f64);
        }

        store.store(task, data)?;
        Ok(TrainingSummary { task, epoch_losses })
    }

    /// Replay batch drawn evenly over all buffers except the current task's.
    fn draw_replay(
        &mut self,
        store: &mut MemoryStore,
        current_task: usize,
        n: usize,
    ) -> Result<Vec<Sample>> {
        let others: Vec<usize> = store
            .tasks()
            .into_iter()
            .filter(|&t| t != current_task && store.buffer_len(t) > 0)
            .collect();
        let base = n / others.len();
        let remainder = n % others.len();
        let mut out = Vec::with_capacity(n);
        for (i, t) in others.iter().enumerate() {
            let quota = base + usize::from(i < remainder);
            if quota > 0 {
                out.extend(store.draw(*t, quota)?);
            }
        }
        Ok(out)
    }

    /// Mean cross-entropy loss and gradients over `(task, sample)` items.
    fn batch_gradients(
        &self,
        items: &[(usize, &Sample)],
    ) -> Result<(f64, Vec<DenseGrad>, BTreeMap<usize, DenseGrad>)> {
        if items.is_empty() {
            return Err(Error::EmptyInput("gradient batch"));
        }
        let mut ext_grads = self.extractor.zero_grads();
        let mut head_grads: BTreeMap<usize, DenseGrad> = BTreeMap::new();
        let mut loss_sum = 0.0;
        let scale = 1.0 / items.len() as f64;
        for &(task, sample) in items {
            let head = self.heads.get(&task).ok_or(Error::UnknownTask(task))?;
            if sample.label >= head.out_dim {
                return Err(Error::MalformedData(format!(
                    "label {} out of range for task {task} head with {} classes",
                    sample.label, head.out_dim
                )));
            }
            self.extractor.check_input(&sample.features)?;
            let trace = self.extractor.forward_trace(&sample.features);
            let feature = trace.last().unwrap();
            let logits = head.forward(feature);

            // Stable softmax cross-entropy.
            let z_max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let exp_sum: f64 = logits.iter().map(|z| (z - z_max).exp()).sum();
            loss_sum += exp_sum.ln() - (logits[sample.label] - z_max);
            let mut dz: Vec<f64> = logits
                .iter()
                .map(|z| (z - z_max).exp() / exp_sum * scale)
                .collect();
            dz[sample.label] -= scale;

            let grad = head_grads.entry(task).or_insert_with(|| head.zero_grad());
            let grad_feature = head.backward(feature, &dz, grad);
            self.extractor.backward(&trace, &grad_feature, &mut ext_grads);
        }
        Ok((loss_sum * scale, ext_grads, head_grads))
    }

    /// Mean cross-entropy of the current parameters on `(task, sample)` items.
    fn batch_loss(&self, items: &[(usize, &Sample)]) -> Result<f64> {
        let mut sum = 0.0;
        for &(task, sample) in items {
            let logits = self.logits(&sample.features, task)?;
            let z_max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let exp_sum: f64 = logits.iter().map(|z| (z - z_max).exp()).sum();
            sum += exp_sum.ln() - (logits[sample.label] - z_max);
        }
        Ok(sum / items.len() as f64)
    }

    fn param_count(&self) -> usize {
        self.extractor.param_count()
            + self.heads.values().map(DenseLayer::param_count).sum::<usize>()
    }

    fn get_param(&self, mut idx: usize) -> f64 {
        if idx < self.extractor.param_count() {
            return self.extractor.get_param(idx);
        }
        idx -= self.extractor.param_count();
        for head in self.heads.values() {
            if idx < head.param_count() {
                return head.get_param(idx);
            }
            idx -= head.param_count();
        }
        panic!("parameter index out of range");
    }

    fn set_param(&mut self, mut idx: usize, value: f64) {
        if idx < self.extractor.param_count() {
            self.extractor.set_param(idx, value);
            return;
        }
        idx -= self.extractor.param_count();
        for head in self.heads.values_mut() {
            if idx < head.param_count() {
                head.set_param(idx, value);
                return;
            }
            idx -= head.param_count();
        }
        panic!("parameter index out of range");
    }

    /// Writes the checkpoint: magic `H2ST-MDL\0`, a version byte, the
    /// dimension table, then all weight matrices and bias vectors as
    /// little-endian f64 in layer order (extractor layers first, then heads
    /// in ascending task order; weights before bias within a layer).
    pub fn save_checkpoint(&self, path: &Path) -> Result<()> {
        let mut out: Vec<u8> = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.push(CHECKPOINT_VERSION);
        push_u32(&mut out, self.input_dim as u32);
        push_u32(&mut out, self.extractor.layers.len() as u32);
        for layer in &self.extractor.layers {
            push_u32(&mut out, layer.out_dim as u32);
        }
        push_u32(&mut out, self.heads.len() as u32);
        for (task, head) in &self.heads {
            push_u32(&mut out, *task as u32);
            push_u32(&mut out, head.out_dim as u32);
        }
        for layer in self.extractor.layers.iter().chain(self.heads.values()) {
            for &w in layer.weights.iter().chain(&layer.bias) {
                out.extend_from_slice(&w.to_le_bytes());
            }
        }
        std::fs::File::create(path)?.write_all(&out)?;
        Ok(())
    }

    /// Reads a checkpoint written by [`TaskModel::save_checkpoint`].
    ///
    /// Optimizer settings are not persisted; `config` supplies them, with
    /// its hidden layout replaced by the checkpoint's dimension table.
    pub fn load_checkpoint(path: &Path, mut config: TrainConfig) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        let mut cursor = 0usize;

        let magic = take(&bytes, &mut cursor, CHECKPOINT_MAGIC.len())?;
        if magic != CHECKPOINT_MAGIC {
            return Err(Error::MalformedData("bad checkpoint magic".into()));
        }
        let version = take(&bytes, &mut cursor, 1)?[0];
        if version != CHECKPOINT_VERSION {
            return Err(Error::MalformedData(format!(
                "unsupported checkpoint version {version}"
            )));
        }
        let input_dim = read_u32(&bytes, &mut cursor)? as usize;
        let n_layers = read_u32(&bytes, &mut cursor)? as usize;
        let mut dims = Vec::with_capacity(n_layers);
        for _ in 0..n_layers {
            dims.push(read_u32(&bytes, &mut cursor)? as usize);
        }
        let n_heads = read_u32(&bytes, &mut cursor)? as usize;
        let mut head_shapes = Vec::with_capacity(n_heads);
        for _ in 0..n_heads {
            let task = read_u32(&bytes, &mut cursor)? as usize;
            let classes = read_u32(&bytes, &mut cursor)? as usize;
            head_shapes.push((task, classes));
        }

        config.hidden_layers = dims.clone();
        config.validate()?;
        let mut model = TaskModel::new(input_dim, config)?;
        for layer in &mut model.extractor.layers {
            read_layer(&bytes, &mut cursor, layer)?;
        }
        let feature_dim = model.feature_dim();
        for (task, classes) in head_shapes {
            let mut head = DenseLayer {
                in_dim: feature_dim,
                out_dim: classes,
                weights: vec![0.0; feature_dim * classes],
                bias: vec![0.0; classes],
            };
            read_layer(&bytes, &mut cursor, &mut head)?;
            model.heads.insert(task, head);
        }
        if cursor != bytes.len() {
            return Err(Error::MalformedData("trailing bytes in checkpoint".into()));
        }
        Ok(model)
    }
}

fn push_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn take<'a>(bytes: &'a [u8], cursor: &mut usize, n: usize) -> Result<&'a [u8]> {
    if *cursor + n > bytes.len() {
        return Err(Error::MalformedData("checkpoint truncated".into()));
    }
    let slice = &bytes[*cursor..*cursor + n];
    *cursor += n;
    Ok(slice)
}

fn read_u32(bytes: &[u8], cursor: &mut usize) -> Result<u32> {
    let s = take(bytes, cursor, 4)?;
    Ok(u32::from_le_bytes([s[0], s[1], s[2], s[3]]))
}

fn read_f64(bytes: &[u8], cursor: &mut usize) -> Result<f64> {
    let s = take(bytes, cursor, 8)?;
    let mut arr = [0u8; 8];
    arr.copy_from_slice(s);
    Ok(f64::from_le_bytes(arr))
}

fn read_layer(bytes: &[u8], cursor: &mut usize, layer: &mut DenseLayer) -> Result<()> {
    for w in layer.weights.iter_mut() {
        *w = read_f64(bytes, cursor)?;
    }
    for b in layer.bias.iter_mut() {
        *b = read_f64(bytes, cursor)?;
    }
    Ok(())
}

/// Maximum relative error between analytic and central-finite-difference
/// gradients of the model's cross-entropy on `items`.
pub fn model_gradient_check(
    model: &TaskModel,
    items: &[(usize, &Sample)],
    eps: f64,
) -> Result<f64> {
    let (_, ext_grads, head_grads) = model.batch_gradients(items)?;

    // Flatten analytic gradients in the same order as get_param/set_param.
    let mut analytic: Vec<f64> = Vec::with_capacity(model.param_count());
    for grad in &ext_grads {
        analytic.extend(grad.weights.iter().chain(&grad.bias).copied());
    }
    for (task, head) in &model.heads {
        match head_grads.get(task) {
            Some(grad) => analytic.extend(grad.weights.iter().chain(&grad.bias).copied()),
            None => analytic.extend(std::iter::repeat(0.0).take(head.param_count())),
        }
    }

    let mut max_rel = 0.0f64;
    for idx in 0..model.param_count() {
        let mut plus = model.clone();
        plus.set_param(idx, plus.get_param(idx) + eps);
        let mut minus = model.clone();
        minus.set_param(idx, minus.get_param(idx) - eps);
        let numeric = (plus.batch_loss(items)? - minus.batch_loss(items)?) / (2.0 * eps);
        let denom = numeric.abs().max(analytic[idx].abs()).max(1e-8);
        max_rel = max_rel.max((numeric - analytic[idx]).abs() / denom);
    }
    Ok(max_rel)
}
