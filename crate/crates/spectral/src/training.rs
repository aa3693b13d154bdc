//! Loss, optimizer and the shared training loop.
//!
//! Both classifiers (the 1D CNN and the linear head over transform features)
//! train through the same loop: seeded shuffled batches, AdamW with zero
//! weight decay, per-epoch validation, and checkpoint selection at the epoch
//! with maximal validation mIoU (ties go to the earlier epoch). Batch
//! gradients reduce over fixed-size chunks in a fixed order, so a run is
//! bitwise reproducible for a given seed.

use std::io::{Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use rayon::prelude::*;

use crate::data::epoch_batches;
use crate::error::{Result, SpectralError};
use crate::liunet::{self, LiuNetParams};
use crate::metrics::{ConfusionMatrix, MetricSummary};

/// Training hyperparameters. The defaults mirror the shared protocol:
/// batch 4096, 10 epochs, AdamW without weight decay.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
    pub seed: u64,
}

/// Learning rate used for the 1D CNN.
pub const LR_LIUNET: f64 = 1e-3;
/// Learning rate used for the linear head over transform features.
pub const LR_ROCKET_HEAD: f64 = 3e-5;

impl TrainConfig {
    pub fn new(learning_rate: f64, seed: u64) -> Self {
        TrainConfig {
            epochs: 10,
            batch_size: 4096,
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay: 0.0,
            seed,
        }
    }
}

/// Numerically stable softmax cross-entropy.
///
/// Returns the loss and its gradient w.r.t. the logits,
/// `softmax(logits) - onehot(label)`.
pub fn softmax_cross_entropy(logits: &[f64], label: usize) -> Result<(f64, Vec<f64>)> {
    if label >= logits.len() {
        return Err(SpectralError::Shape(format!(
            "label {label} out of range for {} classes",
            logits.len()
        )));
    }
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let sum_exp: f64 = logits.iter().map(|&v| (v - max).exp()).sum();
    let log_sum_exp = max + sum_exp.ln();
    let loss = log_sum_exp - logits[label];
    let mut grad: Vec<f64> = logits.iter().map(|&v| (v - max).exp() / sum_exp).collect();
    grad[label] -= 1.0;
    Ok((loss, grad))
}

/// First/second moment estimates plus the step counter.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
}

impl AdamState {
    pub fn new(num_params: usize) -> Self {
        AdamState { m: vec![0.0; num_params], v: vec![0.0; num_params], step: 0 }
    }
}

/// One decoupled-weight-decay Adam step (decay 0 reduces to Adam), with
/// bias-corrected moments.
pub fn adamw_step(params: &mut [f64], grads: &[f64], state: &mut AdamState, cfg: &TrainConfig) {
    assert_eq!(params.len(), grads.len());
    assert_eq!(params.len(), state.m.len());
    state.step += 1;
    let t = state.step as f64;
    let bc1 = 1.0 - cfg.beta1.powf(t);
    let bc2 = 1.0 - cfg.beta2.powf(t);
    for i in 0..params.len() {
        state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * grads[i];
        state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * grads[i] * grads[i];
        let m_hat = state.m[i] / bc1;
        let v_hat = state.v[i] / bc2;
        params[i] -= cfg.learning_rate * (m_hat / (v_hat.sqrt() + cfg.epsilon)
            + cfg.weight_decay * params[i]);
    }
}

/// A classifier the shared loop can train: flat parameter access plus
/// per-sample loss-gradient accumulation.
pub trait Model: Send + Sync {
    fn num_params(&self) -> usize;
    fn flat_params(&self) -> Vec<f64>;
    fn set_flat_params(&mut self, flat: &[f64]);
    /// Add this sample's parameter gradient into `grad`; returns the loss.
    fn accumulate_grad(&self, x: &[f32], label: usize, grad: &mut [f64]) -> Result<f64>;
    fn predict_one(&self, x: &[f32]) -> Result<usize>;
}

/// Argmax with ties broken toward the lower class index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Single dense layer over a feature vector; the classifier head for the
/// transform features. Weights are `[feature][class]` flat, zero-initialized.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearHead {
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
    pub input_dim: usize,
    pub class_count: usize,
}

impl LinearHead {
    pub fn new(input_dim: usize, class_count: usize) -> Self {
        LinearHead {
            weights: vec![0.0; input_dim * class_count],
            biases: vec![0.0; class_count],
            input_dim,
            class_count,
        }
    }

    pub fn logits(&self, x: &[f32]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim {
            return Err(SpectralError::Shape(format!(
                "feature length {} does not match head input {}",
                x.len(),
                self.input_dim
            )));
        }
        let c = self.class_count;
        let mut logits = self.biases.clone();
        for (f, &v) in x.iter().enumerate() {
            let v = v as f64;
            let row = &self.weights[f * c..(f + 1) * c];
            for (j, logit) in logits.iter_mut().enumerate() {
                *logit += row[j] * v;
            }
        }
        Ok(logits)
    }

    /// Serialize to a little-endian layout: magic `b"SLHW"`, version u32,
    /// input_dim u64, class_count u64, then weights and biases as f64.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        w.write_all(b"SLHW")?;
        w.write_u32::<LittleEndian>(1)?;
        w.write_u64::<LittleEndian>(self.input_dim as u64)?;
        w.write_u64::<LittleEndian>(self.class_count as u64)?;
        for &v in self.weights.iter().chain(&self.biases) {
            w.write_f64::<LittleEndian>(v)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut r = std::io::BufReader::new(std::fs::File::open(path)?);
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != b"SLHW" {
            return Err(SpectralError::Format("bad head checkpoint magic".into()));
        }
        let version = r.read_u32::<LittleEndian>()?;
        if version != 1 {
            return Err(SpectralError::Format(format!("unsupported head version {version}")));
        }
        let input_dim = r.read_u64::<LittleEndian>()? as usize;
        let class_count = r.read_u64::<LittleEndian>()? as usize;
        let mut head = LinearHead::new(input_dim, class_count);
        r.read_f64_into::<LittleEndian>(&mut head.weights)
            .map_err(|e| SpectralError::Format(format!("head checkpoint truncated: {e}")))?;
        r.read_f64_into::<LittleEndian>(&mut head.biases)
            .map_err(|e| SpectralError::Format(format!("head checkpoint truncated: {e}")))?;
        Ok(head)
    }
}

impl Model for LinearHead {
    fn num_params(&self) -> usize {
        self.weights.len() + self.biases.len()
    }

    fn flat_params(&self) -> Vec<f64> {
        let mut flat = self.weights.clone();
        flat.extend_from_slice(&self.biases);
        flat
    }

    fn set_flat_params(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.num_params());
        let nw = self.weights.len();
        self.weights.copy_from_slice(&flat[..nw]);
        self.biases.copy_from_slice(&flat[nw..]);
    }

    fn accumulate_grad(&self, x: &[f32], label: usize, grad: &mut [f64]) -> Result<f64> {
        let logits = self.logits(x)?;
        let (loss, dlogits) = softmax_cross_entropy(&logits, label)?;
        let c = self.class_count;
        let nw = self.weights.len();
        for (f, &v) in x.iter().enumerate() {
            let v = v as f64;
            let row = &mut grad[f * c..(f + 1) * c];
            for (j, g) in row.iter_mut().enumerate() {
                *g += v * dlogits[j];
            }
        }
        for (j, &d) in dlogits.iter().enumerate() {
            grad[nw + j] += d;
        }
        Ok(loss)
    }

    fn predict_one(&self, x: &[f32]) -> Result<usize> {
        Ok(argmax(&self.logits(x)?))
    }
}

/// The 1D CNN behind the shared [`Model`] interface.
#[derive(Debug, Clone, PartialEq)]
pub struct LiuNetModel {
    pub params: LiuNetParams,
}

impl LiuNetModel {
    pub fn init(input_len: usize, class_count: usize, seed: u64) -> Result<Self> {
        Ok(LiuNetModel { params: LiuNetParams::init(input_len, class_count, seed)? })
    }
}

impl Model for LiuNetModel {
    fn num_params(&self) -> usize {
        self.params.param_count()
    }

    fn flat_params(&self) -> Vec<f64> {
        self.params.flat()
    }

    fn set_flat_params(&mut self, flat: &[f64]) {
        self.params.set_flat(flat);
    }

    fn accumulate_grad(&self, x: &[f32], label: usize, grad: &mut [f64]) -> Result<f64> {
        let xf: Vec<f64> = x.iter().map(|&v| v as f64).collect();
        let (logits, cache) = liunet::forward(&self.params, &xf)?;
        let (loss, dlogits) = softmax_cross_entropy(&logits, label)?;
        let sample_grads = liunet::backward(&self.params, &cache, &dlogits)?;
        for (g, s) in grad.iter_mut().zip(sample_grads.flat()) {
            *g += s;
        }
        Ok(loss)
    }

    fn predict_one(&self, x: &[f32]) -> Result<usize> {
        let xf: Vec<f64> = x.iter().map(|&v| v as f64).collect();
        let (logits, _) = liunet::forward(&self.params, &xf)?;
        Ok(argmax(&logits))
    }
}

/// Feature vectors plus labels; the in-memory training set.
#[derive(Debug, Clone, Default)]
pub struct LabeledVectors {
    pub xs: Vec<Vec<f32>>,
    pub ys: Vec<usize>,
}

impl LabeledVectors {
    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }

    pub fn push(&mut self, x: Vec<f32>, y: usize) {
        self.xs.push(x);
        self.ys.push(y);
    }
}

/// One row of the per-epoch log.
#[derive(Debug, Clone)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val: MetricSummary,
}

/// Result of a training run: the best epoch's parameters and the full log.
pub struct TrainOutcome {
    pub best_epoch: usize,
    pub best_params: Vec<f64>,
    pub log: Vec<EpochLog>,
}

// Fixed chunk width for parallel gradient accumulation. Partial sums are
// reduced sequentially in chunk order, keeping results independent of the
// worker count.
const GRAD_CHUNK: usize = 256;

fn batch_gradient<M: Model>(
    model: &M,
    data: &LabeledVectors,
    batch: &[usize],
) -> Result<(f64, Vec<f64>)> {
    let partials: Vec<Result<(f64, Vec<f64>)>> = batch
        .par_chunks(GRAD_CHUNK)
        .map(|chunk| {
            let mut grad = vec![0f64; model.num_params()];
            let mut loss = 0f64;
            for &idx in chunk {
                loss += model.accumulate_grad(&data.xs[idx], data.ys[idx], &mut grad)?;
            }
            Ok((loss, grad))
        })
        .collect();
    let mut grad = vec![0f64; model.num_params()];
    let mut loss = 0f64;
    for partial in partials {
        let (l, g) = partial?;
        loss += l;
        for (a, b) in grad.iter_mut().zip(&g) {
            *a += b;
        }
    }
    let n = batch.len() as f64;
    loss /= n;
    for g in grad.iter_mut() {
        *g /= n;
    }
    Ok((loss, grad))
}

/// Predictions for a whole sample set, order-preserving.
pub fn predict<M: Model>(model: &M, data: &LabeledVectors) -> Result<Vec<usize>> {
    data.xs.par_iter().map(|x| model.predict_one(x)).collect()
}

/// Evaluate a model into a confusion matrix.
pub fn evaluate<M: Model>(
    model: &M,
    data: &LabeledVectors,
    class_count: usize,
) -> Result<ConfusionMatrix> {
    let preds = predict(model, data)?;
    ConfusionMatrix::from_pairs(&preds, &data.ys, class_count)
}

/// The shared training loop.
///
/// Runs `epochs` passes of seeded shuffled batches, computes validation
/// metrics after each epoch and returns the parameters of the epoch with the
/// maximal validation mIoU. The model is left holding the best parameters.
pub fn train<M: Model>(
    model: &mut M,
    train_data: &LabeledVectors,
    val_data: &LabeledVectors,
    cfg: &TrainConfig,
    class_count: usize,
) -> Result<TrainOutcome> {
    if train_data.is_empty() {
        return Err(SpectralError::EmptyInput("empty training set".into()));
    }
    if val_data.is_empty() {
        return Err(SpectralError::EmptyInput("empty validation set".into()));
    }
    let mut state = AdamState::new(model.num_params());
    let mut log = Vec::with_capacity(cfg.epochs);
    let mut best_epoch = 0;
    let mut best_miou = f64::NEG_INFINITY;
    let mut best_params = model.flat_params();
    for epoch in 0..cfg.epochs {
        let mut epoch_loss = 0f64;
        let mut batches_seen = 0usize;
        for batch in epoch_batches(train_data.len(), cfg.batch_size, cfg.seed, epoch, true) {
            let (loss, grad) = batch_gradient(model, train_data, &batch)?;
            let mut params = model.flat_params();
            adamw_step(&mut params, &grad, &mut state, cfg);
            model.set_flat_params(&params);
            epoch_loss += loss;
            batches_seen += 1;
        }
        let summary = evaluate(model, val_data, class_count)?.summary()?;
        if summary.miou > best_miou {
            best_miou = summary.miou;
            best_epoch = epoch;
            best_params = model.flat_params();
        }
        log.push(EpochLog { epoch, train_loss: epoch_loss / batches_seen as f64, val: summary });
    }
    model.set_flat_params(&best_params);
    Ok(TrainOutcome { best_epoch, best_params, log })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_logits_loss_is_ln_c() {
        let (loss, _) = softmax_cross_entropy(&[0.7, 0.7, 0.7], 1).unwrap();
        assert!((loss - 3f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn extreme_logits_do_not_overflow() {
        let (loss, grad) = softmax_cross_entropy(&[1000.0, 0.0], 0).unwrap();
        assert!(loss.abs() < 1e-9);
        assert!(grad.iter().all(|g| g.is_finite()));
    }

    #[test]
    fn loss_gradient_matches_finite_differences() {
        let logits = vec![0.3, -1.2, 0.9, 0.05];
        let label = 2;
        let (_, grad) = softmax_cross_entropy(&logits, label).unwrap();
        let eps = 1e-6;
        for i in 0..logits.len() {
            let mut plus = logits.clone();
            plus[i] += eps;
            let mut minus = logits.clone();
            minus[i] -= eps;
            let lp = softmax_cross_entropy(&plus, label).unwrap().0;
            let lm = softmax_cross_entropy(&minus, label).unwrap().0;
            let numeric = (lp - lm) / (2.0 * eps);
            assert!((numeric - grad[i]).abs() <= 1e-6, "component {i}");
        }
    }

    #[test]
    fn adamw_zero_gradient_keeps_params() {
        let cfg = TrainConfig::new(1e-3, 0);
        let mut params = vec![0.5, -0.25];
        let mut state = AdamState::new(2);
        adamw_step(&mut params, &[0.0, 0.0], &mut state, &cfg);
        assert_eq!(params, vec![0.5, -0.25]);
    }

    #[test]
    fn adamw_first_step_moves_against_gradient() {
        let cfg = TrainConfig::new(1e-2, 0);
        let mut params = vec![0.0, 0.0];
        let mut state = AdamState::new(2);
        let grads = [0.3, -0.7];
        adamw_step(&mut params, &grads, &mut state, &cfg);
        // One step from zero moments: update = -lr * g / (|g| + eps').
        for i in 0..2 {
            assert_eq!(params[i].signum(), -grads[i].signum());
            let expected = -cfg.learning_rate * grads[i]
                / (grads[i].abs() + cfg.epsilon * (1.0 - cfg.beta2.powi(1)).sqrt() / (1.0 - cfg.beta2).sqrt());
            assert!((params[i] - expected).abs() < 1e-6, "{} vs {expected}", params[i]);
        }
    }

    #[test]
    fn adamw_matches_scalar_loop_reference() {
        // Reference: textbook scalar Adam recursion carried along explicitly.
        let cfg = TrainConfig::new(3e-3, 0);
        let mut params = vec![0.1, -0.2, 0.4];
        let mut state = AdamState::new(3);
        let mut m = [0f64; 3];
        let mut v = [0f64; 3];
        let mut reference = [0.1, -0.2, 0.4];
        let grad_seq = [[0.5, -0.1, 0.2], [-0.3, 0.2, 0.0], [0.9, 0.9, -0.9]];
        for (t, grads) in grad_seq.iter().enumerate() {
            adamw_step(&mut params, grads, &mut state, &cfg);
            let step = (t + 1) as f64;
            for i in 0..3 {
                m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * grads[i];
                v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * grads[i] * grads[i];
                let m_hat = m[i] / (1.0 - cfg.beta1.powf(step));
                let v_hat = v[i] / (1.0 - cfg.beta2.powf(step));
                reference[i] -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
            }
        }
        for i in 0..3 {
            assert!((params[i] - reference[i]).abs() <= 1e-12);
        }
    }

    fn separable_fixture(n_per_class: usize) -> LabeledVectors {
        // Two classes, trivially separable on the first feature.
        let mut data = LabeledVectors::default();
        for i in 0..n_per_class {
            let wiggle = (i % 7) as f32 * 0.01;
            data.push(vec![1.0 + wiggle, 0.1], 0);
            data.push(vec![-1.0 - wiggle, 0.1], 1);
        }
        data
    }

    #[test]
    fn linear_head_fits_separable_fixture() {
        let train_data = separable_fixture(64);
        let val_data = separable_fixture(16);
        let mut head = LinearHead::new(2, 2);
        let mut cfg = TrainConfig::new(0.05, 1);
        cfg.batch_size = 32;
        let outcome = train(&mut head, &train_data, &val_data, &cfg, 2).unwrap();
        let best = &outcome.log[outcome.best_epoch].val;
        assert_eq!(best.miou, 1.0, "separable fixture should reach perfect val mIoU");
        let preds = predict(&head, &train_data).unwrap();
        assert_eq!(preds, train_data.ys);
    }

    #[test]
    fn best_epoch_is_argmax_of_log() {
        let train_data = separable_fixture(32);
        let val_data = separable_fixture(8);
        let mut head = LinearHead::new(2, 2);
        let cfg = TrainConfig::new(0.01, 3);
        let outcome = train(&mut head, &train_data, &val_data, &cfg, 2).unwrap();
        let max = outcome.log.iter().map(|e| e.val.miou).fold(f64::MIN, f64::max);
        assert_eq!(outcome.log[outcome.best_epoch].val.miou, max);
        // Ties break to the earliest epoch.
        let first_max = outcome.log.iter().position(|e| e.val.miou == max).unwrap();
        assert_eq!(outcome.best_epoch, first_max);
    }

    #[test]
    fn training_is_deterministic() {
        let train_data = separable_fixture(32);
        let val_data = separable_fixture(8);
        let cfg = TrainConfig::new(0.01, 7);
        let mut a = LinearHead::new(2, 2);
        let mut b = LinearHead::new(2, 2);
        let out_a = train(&mut a, &train_data, &val_data, &cfg, 2).unwrap();
        let out_b = train(&mut b, &train_data, &val_data, &cfg, 2).unwrap();
        assert_eq!(out_a.best_params, out_b.best_params);
        for (ea, eb) in out_a.log.iter().zip(&out_b.log) {
            assert_eq!(ea.train_loss, eb.train_loss);
            assert_eq!(ea.val.miou, eb.val.miou);
        }
    }

    #[test]
    fn empty_split_is_an_error() {
        let mut head = LinearHead::new(2, 2);
        let cfg = TrainConfig::new(0.01, 0);
        let data = separable_fixture(4);
        assert!(train(&mut head, &LabeledVectors::default(), &data, &cfg, 2).is_err());
        assert!(train(&mut head, &data, &LabeledVectors::default(), &cfg, 2).is_err());
    }

    #[test]
    fn head_checkpoint_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("head.bin");
        let mut head = LinearHead::new(3, 2);
        head.weights = vec![0.5, -0.25, 1.5, 0.0, 2.0, -3.0];
        head.biases = vec![0.125, -0.75];
        head.save(&path).unwrap();
        let back = LinearHead::load(&path).unwrap();
        assert_eq!(back, head);
    }

    #[test]
    fn argmax_breaks_ties_low() {
        assert_eq!(argmax(&[0.0, 0.0, 0.0]), 0);
        assert_eq!(argmax(&[1.0, 2.0, 2.0]), 1);
    }

    #[test]
    fn argmax_invariant_under_softmax() {
        let logits = vec![0.2, 1.5, -0.3, 1.5];
        let max = logits.iter().cloned().fold(f64::MIN, f64::max);
        let softmax: Vec<f64> = logits.iter().map(|&v| (v - max).exp()).collect();
        assert_eq!(argmax(&logits), argmax(&softmax));
        // Positive scaling leaves predictions unchanged.
        let scaled: Vec<f64> = logits.iter().map(|&v| 3.5 * v).collect();
        assert_eq!(argmax(&logits), argmax(&scaled));
    }
}
