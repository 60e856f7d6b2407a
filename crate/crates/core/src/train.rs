//! KL + L2 objective, Adam, the two-phase schedule and the training loop.

use std::io::Write;
use std::path::PathBuf;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::augment::{augment_batch, AugmentConfig, AugmentError, LabeledBatch, RngStreams};
use crate::frontend::CacheRecord;
use crate::model::{ModelError, Network};
use crate::tensor::{Graph, Mode, ParamStore, Tensor, TensorError};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("epoch {epoch} outside [0, {epochs})")]
    EpochOutOfRange { epoch: usize, epochs: usize },
    #[error("prediction {value} at index {index} is not strictly positive")]
    NonPositivePrediction { index: usize, value: f64 },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("empty dataset")]
    EmptyDataset,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Augment(#[from] AugmentError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl From<TensorError> for TrainError {
    fn from(e: TensorError) -> Self {
        match e {
            TensorError::NonPositivePrediction { index, value } => TrainError::NonPositivePrediction { index, value },
            other => TrainError::Model(ModelError::Tensor(other)),
        }
    }
}

pub type Result<T> = std::result::Result<T, TrainError>;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    /// Samples per forward/backward pass; gradients accumulate across the
    /// micro-batches of one optimizer step.
    pub micro_batch: usize,
    pub epochs: usize,
    pub phase1_epochs: usize,
    pub lr_phase1: f64,
    pub lr_phase2: f64,
    pub l2_lambda: f64,
    /// Regularize every parameter instead of conv/FC weights only.
    pub l2_all_params: bool,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub seed: u64,
    pub checkpoint_every: Option<usize>,
    pub checkpoint_dir: Option<PathBuf>,
    /// Hard cap on optimizer steps.
    pub max_steps: Option<usize>,
    /// Stop after the first epoch whose training accuracy reaches this value.
    pub stop_at_train_acc: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 100,
            micro_batch: 20,
            epochs: 100,
            phase1_epochs: 80,
            lr_phase1: 1e-4,
            lr_phase2: 1e-6,
            l2_lambda: 1e-4,
            l2_all_params: false,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            seed: 0,
            checkpoint_every: None,
            checkpoint_dir: None,
            max_steps: None,
            stop_at_train_acc: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(TrainError::InvalidConfig(m.into()));
        if self.batch_size == 0 || self.micro_batch == 0 || self.epochs == 0 {
            return bad("batch_size, micro_batch and epochs must be positive");
        }
        if self.phase1_epochs > self.epochs {
            return bad("phase1_epochs must not exceed epochs");
        }
        for r in [self.lr_phase1, self.lr_phase2, self.adam_eps] {
            if !(r > 0.0) {
                return bad("rates must be positive");
            }
        }
        if !(self.l2_lambda >= 0.0) {
            return bad("l2_lambda must be non-negative");
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return bad("Adam betas must lie in [0, 1)");
        }
        if self.checkpoint_every == Some(0) {
            return bad("checkpoint_every must be positive");
        }
        Ok(())
    }
}

/// `(learning rate, augmentation enabled)` for a zero-based epoch.
pub fn lr_schedule(cfg: &TrainConfig, epoch: usize) -> Result<(f64, bool)> {
    if epoch >= cfg.epochs {
        return Err(TrainError::EpochOutOfRange { epoch, epochs: cfg.epochs });
    }
    Ok(if epoch < cfg.phase1_epochs { (cfg.lr_phase1, true) } else { (cfg.lr_phase2, false) })
}

/// `(λ/2) · Σ θ²` over the regularized parameters.
pub fn l2_term(params: &ParamStore<f32>, lambda: f64, all: bool) -> f64 {
    let sum: f64 = params
        .iter()
        .filter(|p| all || p.l2_included)
        .flat_map(|p| p.value.data().iter())
        .map(|&v| (v as f64) * (v as f64))
        .sum();
    0.5 * lambda * sum
}

/// `Σ_n Σ_m y log(y / ŷ) + (λ/2)‖Θ‖²` for row-major `B × M` arrays,
/// with `0 · log(0 / ·) = 0`.
pub fn kl_loss(y: &[f64], y_hat: &[f64], theta_sq_sum: f64, lambda: f64) -> Result<f64> {
    if y.len() != y_hat.len() {
        return Err(TrainError::ShapeMismatch(format!("{} labels vs {} predictions", y.len(), y_hat.len())));
    }
    let mut kl = 0.0;
    for (i, (&t, &p)) in y.iter().zip(y_hat).enumerate() {
        if !(p > 0.0) {
            return Err(TrainError::NonPositivePrediction { index: i, value: p });
        }
        if t > 0.0 {
            kl += t * (t / p).ln();
        }
    }
    Ok(kl + 0.5 * lambda * theta_sq_sum)
}

/// Adam moments per parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub m: Vec<Vec<f32>>,
    pub v: Vec<Vec<f32>>,
    pub t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl OptimizerState {
    pub fn new(params: &ParamStore<f32>, beta1: f64, beta2: f64, eps: f64) -> Self {
        let zeros = || params.iter().map(|p| vec![0.0f32; p.value.numel()]).collect::<Vec<_>>();
        Self { m: zeros(), v: zeros(), t: 0, beta1, beta2, eps }
    }
}

/// One bias-corrected Adam update from the gradients held in `params`.
pub fn adam_step(params: &mut ParamStore<f32>, state: &mut OptimizerState, lr: f64) -> Result<()> {
    if state.m.len() != params.len() {
        return Err(TrainError::ShapeMismatch(format!("{} moment tensors for {} parameters", state.m.len(), params.len())));
    }
    for (p, m) in params.iter().zip(&state.m) {
        if m.len() != p.value.numel() || p.grad.numel() != p.value.numel() {
            return Err(TrainError::ShapeMismatch(format!("moment shape differs for '{}'", p.name)));
        }
    }
    state.t += 1;
    let (b1, b2) = (state.beta1, state.beta2);
    let c1 = 1.0 - b1.powi(state.t as i32);
    let c2 = 1.0 - b2.powi(state.t as i32);
    let step = (lr / c1) as f32;
    let c2_sqrt = c2.sqrt() as f32;
    let eps = state.eps as f32;
    let (b1f, b2f) = (b1 as f32, b2 as f32);
    for ((p, m), v) in params.iter_mut().zip(&mut state.m).zip(&mut state.v) {
        let grad = p.grad.data().to_vec();
        for (((theta, g), mi), vi) in p.value.data_mut().iter_mut().zip(&grad).zip(m.iter_mut()).zip(v.iter_mut()) {
            *mi = b1f * *mi + (1.0 - b1f) * g;
            *vi = b2f * *vi + (1.0 - b2f) * g * g;
            // lr · m̂ / (√v̂ + ε) with m̂ = m / c1 and v̂ = v / c2.
            *theta -= step * *mi / (vi.sqrt() / c2_sqrt + eps);
        }
    }
    Ok(())
}

/// Labeled feature blocks held in memory, `N × F × T × C`.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub features: Vec<f32>,
    pub dims: [usize; 3],
    pub labels: Vec<u8>,
    pub devices: Vec<String>,
    pub n_classes: usize,
}

impl Dataset {
    pub fn from_records(records: &[CacheRecord], n_classes: usize) -> Result<Self> {
        let first = records.first().ok_or(TrainError::EmptyDataset)?;
        let dims = first.features.shape();
        let mut features = Vec::with_capacity(records.len() * dims.iter().product::<usize>());
        for r in records {
            if r.features.shape() != dims {
                return Err(TrainError::ShapeMismatch("records differ in shape".into()));
            }
            if r.label as usize >= n_classes {
                return Err(TrainError::ShapeMismatch(format!("label {} with {n_classes} classes", r.label)));
            }
            features.extend_from_slice(&r.features.data);
        }
        Ok(Self {
            features,
            dims,
            labels: records.iter().map(|r| r.label).collect(),
            devices: records.iter().map(|r| r.device.clone()).collect(),
            n_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn sample_len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn sample(&self, i: usize) -> &[f32] {
        let n = self.sample_len();
        &self.features[i * n..(i + 1) * n]
    }

    /// One-hot batch of the given sample indices.
    pub fn batch(&self, idx: &[usize]) -> Result<LabeledBatch> {
        let m = self.n_classes;
        let mut feats = Vec::with_capacity(idx.len() * self.sample_len());
        let mut labels = vec![0.0f32; idx.len() * m];
        for (k, &i) in idx.iter().enumerate() {
            feats.extend_from_slice(self.sample(i));
            labels[k * m + self.labels[i] as usize] = 1.0;
        }
        let [f, t, c] = self.dims;
        Ok(LabeledBatch::new(
            feats,
            [idx.len(), f, t, c],
            labels,
            m,
            idx.iter().map(|&i| self.devices[i].clone()).collect(),
            idx.iter().map(|&i| i as u64).collect(),
        )?)
    }
}

/// Per-channel mean and standard deviation of a training set. Applying it
/// puts every frontend on a common scale, so zero-valued masks and padding
/// land on the channel mean.
#[derive(Debug, Clone, PartialEq)]
pub struct InputNorm {
    pub mean: Vec<f32>,
    pub std: Vec<f32>,
}

impl InputNorm {
    pub const MIN_STD: f64 = 1e-6;

    pub fn fit(data: &Dataset) -> Result<Self> {
        if data.is_empty() {
            return Err(TrainError::EmptyDataset);
        }
        let c = data.dims[2];
        let n = (data.features.len() / c) as f64;
        let mut mean = vec![0.0f64; c];
        for (i, &v) in data.features.iter().enumerate() {
            mean[i % c] += v as f64 / n;
        }
        let mut var = vec![0.0f64; c];
        for (i, &v) in data.features.iter().enumerate() {
            var[i % c] += (v as f64 - mean[i % c]).powi(2) / n;
        }
        Ok(Self {
            mean: mean.iter().map(|&m| m as f32).collect(),
            std: var.iter().map(|v| v.sqrt().max(Self::MIN_STD) as f32).collect(),
        })
    }

    pub fn apply(&self, data: &mut Dataset) -> Result<()> {
        let c = data.dims[2];
        if self.mean.len() != c || self.std.len() != c {
            return Err(TrainError::ShapeMismatch(format!("{} normalization channels for {c}-channel data", self.mean.len())));
        }
        for (i, v) in data.features.iter_mut().enumerate() {
            *v = (*v - self.mean[i % c]) / self.std[i % c];
        }
        Ok(())
    }

    /// One `channel,mean,std` line per channel.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("channel,mean,std\n");
        for (k, (m, d)) in self.mean.iter().zip(&self.std).enumerate() {
            s.push_str(&format!("{k},{m:e},{d:e}\n"));
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let bad = |l: &str| TrainError::InvalidConfig(format!("bad normalization row '{l}'"));
        let mut lines = text.lines();
        if lines.next().map(str::trim) != Some("channel,mean,std") {
            return Err(TrainError::InvalidConfig("normalization header must be 'channel,mean,std'".into()));
        }
        let (mut mean, mut std) = (Vec::new(), Vec::new());
        for (k, l) in lines.filter(|l| !l.trim().is_empty()).enumerate() {
            let f: Vec<&str> = l.trim().split(',').collect();
            if f.len() != 3 || f[0].parse::<usize>().ok() != Some(k) {
                return Err(bad(l));
            }
            let m: f32 = f[1].parse().map_err(|_| bad(l))?;
            let d: f32 = f[2].parse().map_err(|_| bad(l))?;
            if !m.is_finite() || !(d > 0.0) || !d.is_finite() {
                return Err(bad(l));
            }
            mean.push(m);
            std.push(d);
        }
        if mean.is_empty() {
            return Err(TrainError::InvalidConfig("normalization file has no channels".into()));
        }
        Ok(Self { mean, std })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HistoryRow {
    pub epoch: usize,
    pub phase: u8,
    pub lr: f64,
    /// Mean per-sample KL divergence over the epoch.
    pub loss: f64,
    pub train_acc: f64,
}

pub fn history_csv(rows: &[HistoryRow]) -> String {
    let mut s = String::from("epoch,phase,lr,loss,train_acc\n");
    for r in rows {
        s.push_str(&format!("{},{},{:e},{:.6},{:.4}\n", r.epoch, r.phase, r.lr, r.loss, r.train_acc));
    }
    s
}

pub fn write_history(path: impl AsRef<std::path::Path>, rows: &[HistoryRow]) -> std::io::Result<()> {
    std::fs::File::create(path)?.write_all(history_csv(rows).as_bytes())
}

#[derive(Debug, Clone)]
pub struct FitReport {
    pub history: Vec<HistoryRow>,
    pub steps: usize,
}

fn argmax(row: &[f32]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Forward/backward over `batch`, accumulating `(1/N) ∇ Σ KL` into the
/// parameter gradients. Returns the summed KL and the correct count.
fn accumulate(
    net: &mut Network,
    batch: &LabeledBatch,
    micro: usize,
    scale: f32,
    rng: &mut ChaCha8Rng,
) -> Result<(f64, usize)> {
    let b = batch.batch_size();
    let n = batch.sample_len();
    let m = batch.n_classes;
    let mut kl = 0.0;
    let mut correct = 0;
    let mut start = 0;
    while start < b {
        let end = (start + micro).min(b);
        let mut shape = vec![end - start];
        shape.extend_from_slice(&batch.dims[1..]);
        let mut g = Graph::new();
        let x = g.input(Tensor::new(shape, batch.features[start * n..end * n].to_vec())?);
        let (y, updates) = net.forward(&mut g, x, Mode::Train, rng)?;
        let target = Tensor::new(vec![end - start, m], batch.labels[start * m..end * m].to_vec())?;
        let loss = g.kl_div(target, y)?;
        let loss = g.scale(loss, scale);
        g.backward(loss, net.params_mut())?;
        kl += g.value(loss).data()[0] as f64 / scale as f64;
        let probs = g.value(y).data();
        for i in 0..end - start {
            if argmax(&probs[i * m..(i + 1) * m]) == argmax(batch.label(start + i)) {
                correct += 1;
            }
        }
        net.apply_bn_updates(&updates);
        start = end;
    }
    Ok((kl, correct))
}

fn add_l2_grad(params: &mut ParamStore<f32>, lambda: f64, all: bool, scale: f32) {
    let k = lambda as f32 * scale;
    for p in params.iter_mut().filter(|p| all || p.l2_included) {
        let theta = p.value.data().to_vec();
        for (g, t) in p.grad.data_mut().iter_mut().zip(theta) {
            *g += k * t;
        }
    }
}

/// Trains `net` in place. `on_epoch` sees each history row as it is produced.
pub fn fit(
    net: &mut Network,
    data: &Dataset,
    cfg: &TrainConfig,
    aug: &AugmentConfig,
    mut on_epoch: impl FnMut(&HistoryRow),
) -> Result<FitReport> {
    cfg.validate()?;
    aug.validate()?;
    if data.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    if data.n_classes != net.n_classes() {
        return Err(TrainError::ShapeMismatch(format!(
            "dataset has {} classes, network {}",
            data.n_classes,
            net.n_classes()
        )));
    }
    if !net.is_loaded() {
        net.init_weights(cfg.seed);
    }
    let mut opt = OptimizerState::new(net.params(), cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps);
    let mut history = Vec::new();
    let mut steps = 0;
    'epochs: for epoch in 0..cfg.epochs {
        let (lr, augment) = lr_schedule(cfg, epoch)?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ (epoch as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let streams = RngStreams::new(cfg.seed ^ aug.rng_seed, epoch as u64);
        let mut order: Vec<usize> = (0..data.len()).collect();
        order.shuffle(&mut rng);
        let (mut kl_sum, mut correct, mut seen) = (0.0, 0, 0);
        for (bi, idx) in order.chunks(cfg.batch_size).enumerate() {
            if cfg.max_steps.is_some_and(|s| steps >= s) {
                break;
            }
            let raw = data.batch(idx)?;
            let batch = augment_batch(&raw, aug, &streams, bi as u64, augment)?;
            let scale = 1.0 / batch.batch_size() as f32;
            net.params_mut().zero_grad();
            let (kl, ok) = accumulate(net, &batch, cfg.micro_batch, scale, &mut rng)?;
            add_l2_grad(net.params_mut(), cfg.l2_lambda, cfg.l2_all_params, scale);
            adam_step(net.params_mut(), &mut opt, lr)?;
            kl_sum += kl;
            correct += ok;
            seen += batch.batch_size();
            steps += 1;
        }
        if seen == 0 {
            break;
        }
        let row = HistoryRow {
            epoch,
            phase: if augment { 1 } else { 2 },
            lr,
            loss: kl_sum / seen as f64,
            train_acc: correct as f64 / seen as f64,
        };
        on_epoch(&row);
        let done = cfg.stop_at_train_acc.is_some_and(|a| row.train_acc >= a);
        history.push(row);
        if let (Some(k), Some(dir)) = (cfg.checkpoint_every, &cfg.checkpoint_dir) {
            if (epoch + 1) % k == 0 {
                std::fs::create_dir_all(dir)?;
                let f = std::fs::File::create(dir.join(format!("epoch{:03}.ascw", epoch + 1)))?;
                net.save_weights(std::io::BufWriter::new(f))?;
            }
        }
        if done || cfg.max_steps.is_some_and(|s| steps >= s) {
            break 'epochs;
        }
    }
    Ok(FitReport { history, steps })
}

/// Eval-mode probabilities for every sample, center-cropped to the
/// network's input width.
pub fn predict_dataset(net: &Network, data: &Dataset) -> Result<Vec<f32>> {
    let width = net.input_shape()[1];
    let [f, t, c] = data.dims;
    if width > t || net.input_shape() != [f, width, c] {
        return Err(TrainError::ShapeMismatch(format!("features {f}x{t}x{c} vs network input {:?}", net.input_shape())));
    }
    let off = (t - width) / 2;
    let mut out = Vec::with_capacity(data.len() * net.n_classes());
    for chunk in (0..data.len()).collect::<Vec<_>>().chunks(32) {
        let mut x = Vec::with_capacity(chunk.len() * f * width * c);
        for &i in chunk {
            let s = data.sample(i);
            for fi in 0..f {
                let row = (fi * t + off) * c;
                x.extend_from_slice(&s[row..row + width * c]);
            }
        }
        out.extend(net.predict(&x, chunk.len())?);
    }
    Ok(out)
}
