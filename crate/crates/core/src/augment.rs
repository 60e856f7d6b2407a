//! Online batch augmentation: random temporal crop, single-band masking
//! and mixup, plus the deterministic center crop used when augmentation
//! is off.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum AugmentError {
    #[error("crop width {crop} exceeds {t} frames")]
    CropWiderThanInput { crop: usize, t: usize },
    #[error("mask length {mask} exceeds axis length {len}")]
    MaskLongerThanAxis { mask: usize, len: usize },
    #[error("mixup needs at least two samples, got {0}")]
    BatchTooSmall(usize),
    #[error("invalid augmentation config: {0}")]
    InvalidConfig(String),
    #[error("batch layout: {0}")]
    Layout(String),
}

pub type Result<T> = std::result::Result<T, AugmentError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MixupDist {
    Beta,
    Uniform,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentConfig {
    pub crop_width: usize,
    pub mask_len: usize,
    pub n_masks: usize,
    pub mixup_alpha: f64,
    pub mixup_dist: MixupDist,
    pub rng_seed: u64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self { crop_width: 256, mask_len: 10, n_masks: 1, mixup_alpha: 0.4, mixup_dist: MixupDist::Beta, rng_seed: 0 }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.crop_width == 0 {
            return Err(AugmentError::InvalidConfig("crop_width must be positive".into()));
        }
        if !(self.mixup_alpha > 0.0) {
            return Err(AugmentError::InvalidConfig("mixup_alpha must be positive".into()));
        }
        Ok(())
    }
}

/// Features `[B, F, T, C]` with soft labels `[B, M]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledBatch {
    pub features: Vec<f32>,
    pub dims: [usize; 4],
    pub labels: Vec<f32>,
    pub n_classes: usize,
    pub devices: Vec<String>,
    /// Stable per-sample keys for RNG substreams.
    pub ids: Vec<u64>,
}

impl LabeledBatch {
    pub fn new(
        features: Vec<f32>,
        dims: [usize; 4],
        labels: Vec<f32>,
        n_classes: usize,
        devices: Vec<String>,
        ids: Vec<u64>,
    ) -> Result<Self> {
        let b = dims[0];
        if b == 0 || features.len() != dims.iter().product::<usize>() || labels.len() != b * n_classes {
            return Err(AugmentError::Layout(format!(
                "{} features / {} labels for dims {dims:?} and {n_classes} classes",
                features.len(),
                labels.len()
            )));
        }
        if devices.len() != b || ids.len() != b {
            return Err(AugmentError::Layout("one device tag and id per sample required".into()));
        }
        Ok(Self { features, dims, labels, n_classes, devices, ids })
    }

    pub fn batch_size(&self) -> usize {
        self.dims[0]
    }

    pub fn sample_len(&self) -> usize {
        self.dims[1] * self.dims[2] * self.dims[3]
    }

    pub fn sample(&self, i: usize) -> &[f32] {
        let n = self.sample_len();
        &self.features[i * n..(i + 1) * n]
    }

    pub fn label(&self, i: usize) -> &[f32] {
        &self.labels[i * self.n_classes..(i + 1) * self.n_classes]
    }

    /// Rows are non-negative and sum to 1 within `tol`.
    pub fn labels_on_simplex(&self, tol: f32) -> bool {
        self.labels
            .chunks(self.n_classes)
            .all(|r| r.iter().all(|&v| v >= 0.0) && (r.iter().sum::<f32>() - 1.0).abs() <= tol)
    }

    /// Reorders samples so that output `i` is input `order[i]`.
    pub fn permuted(&self, order: &[usize]) -> Self {
        let n = self.sample_len();
        let mut out = self.clone();
        for (dst, &src) in order.iter().enumerate() {
            out.features[dst * n..(dst + 1) * n].copy_from_slice(self.sample(src));
            out.labels[dst * self.n_classes..(dst + 1) * self.n_classes].copy_from_slice(self.label(src));
            out.devices[dst] = self.devices[src].clone();
            out.ids[dst] = self.ids[src];
        }
        out
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Crop = 1,
    Mask = 2,
    Mixup = 3,
}

/// Independent generators keyed on `(seed, epoch, key, stream)`.
#[derive(Debug, Clone, Copy)]
pub struct RngStreams {
    pub seed: u64,
    pub epoch: u64,
}

impl RngStreams {
    pub fn new(seed: u64, epoch: u64) -> Self {
        Self { seed, epoch }
    }

    pub fn rng(&self, key: u64, stream: Stream) -> ChaCha8Rng {
        let mut r = ChaCha8Rng::seed_from_u64(splitmix(self.seed ^ splitmix(self.epoch)));
        r.set_stream(splitmix(key).wrapping_mul(4).wrapping_add(stream as u64));
        r
    }
}

fn crop_with(batch: &LabeledBatch, width: usize, offset: impl Fn(usize) -> usize) -> LabeledBatch {
    let [b, f, t, c] = batch.dims;
    let mut out = Vec::with_capacity(b * f * width * c);
    for i in 0..b {
        let s = batch.sample(i);
        let off = offset(i);
        for fi in 0..f {
            let row = (fi * t + off) * c;
            out.extend_from_slice(&s[row..row + width * c]);
        }
    }
    LabeledBatch { features: out, dims: [b, f, width, c], ..batch.clone() }
}

/// Per-sample uniform offset in `[0, T − crop_width]`.
pub fn random_crop(batch: &LabeledBatch, cfg: &AugmentConfig, streams: &RngStreams) -> Result<LabeledBatch> {
    let t = batch.dims[2];
    if cfg.crop_width > t {
        return Err(AugmentError::CropWiderThanInput { crop: cfg.crop_width, t });
    }
    let offsets: Vec<usize> =
        batch.ids.iter().map(|&id| streams.rng(id, Stream::Crop).gen_range(0..=t - cfg.crop_width)).collect();
    Ok(crop_with(batch, cfg.crop_width, |i| offsets[i]))
}

/// Deterministic crop starting at `floor((T − width) / 2)`.
pub fn center_crop(batch: &LabeledBatch, width: usize) -> Result<LabeledBatch> {
    let t = batch.dims[2];
    if width > t {
        return Err(AugmentError::CropWiderThanInput { crop: width, t });
    }
    Ok(crop_with(batch, width, |_| (t - width) / 2))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaskAxis {
    Frequency,
    Time,
}

/// Zeroes `len` consecutive indices starting at `start` along `axis` of sample `i`.
pub fn apply_mask(batch: &mut LabeledBatch, i: usize, axis: MaskAxis, start: usize, len: usize) {
    let [_, f, t, c] = batch.dims;
    let n = batch.sample_len();
    let s = &mut batch.features[i * n..(i + 1) * n];
    match axis {
        MaskAxis::Frequency => s[start * t * c..(start + len) * t * c].iter_mut().for_each(|v| *v = 0.0),
        MaskAxis::Time => {
            for fi in 0..f {
                s[(fi * t + start) * c..(fi * t + start + len) * c].iter_mut().for_each(|v| *v = 0.0);
            }
        }
    }
}

/// Per sample and mask: an axis chosen uniformly, then a run of
/// `mask_len` indices at a uniform position set to zero.
pub fn spec_augment(batch: &LabeledBatch, cfg: &AugmentConfig, streams: &RngStreams) -> Result<LabeledBatch> {
    let [_, f, t, _] = batch.dims;
    let mut out = batch.clone();
    if cfg.mask_len == 0 || cfg.n_masks == 0 {
        return Ok(out);
    }
    for len in [f, t] {
        if cfg.mask_len > len {
            return Err(AugmentError::MaskLongerThanAxis { mask: cfg.mask_len, len });
        }
    }
    for i in 0..batch.batch_size() {
        let mut rng = streams.rng(batch.ids[i], Stream::Mask);
        for _ in 0..cfg.n_masks {
            let (axis, len) = if rng.gen_bool(0.5) { (MaskAxis::Frequency, f) } else { (MaskAxis::Time, t) };
            let start = rng.gen_range(0..=len - cfg.mask_len);
            apply_mask(&mut out, i, axis, start, cfg.mask_len);
        }
    }
    Ok(out)
}

/// `x'_i = λ_i x_i + (1 − λ_i) x_{π(i)}`, likewise for labels.
pub fn mixup_with(batch: &LabeledBatch, partner: &[usize], lambdas: &[f32]) -> LabeledBatch {
    let n = batch.sample_len();
    let m = batch.n_classes;
    let mut out = batch.clone();
    for (i, (&j, &lam)) in partner.iter().zip(lambdas).enumerate() {
        for (k, v) in out.features[i * n..(i + 1) * n].iter_mut().enumerate() {
            *v = lam * batch.features[i * n + k] + (1.0 - lam) * batch.features[j * n + k];
        }
        for (k, v) in out.labels[i * m..(i + 1) * m].iter_mut().enumerate() {
            *v = lam * batch.labels[i * m + k] + (1.0 - lam) * batch.labels[j * m + k];
        }
    }
    out
}

/// Mixup with a random permutation and per-sample λ from `rng`.
pub fn mixup<R: Rng + ?Sized>(batch: &LabeledBatch, cfg: &AugmentConfig, rng: &mut R) -> Result<LabeledBatch> {
    let b = batch.batch_size();
    if b < 2 {
        return Err(AugmentError::BatchTooSmall(b));
    }
    cfg.validate()?;
    let mut perm: Vec<usize> = (0..b).collect();
    perm.shuffle(rng);
    let lambdas: Vec<f32> = match cfg.mixup_dist {
        MixupDist::Beta => {
            let d = Beta::new(cfg.mixup_alpha, cfg.mixup_alpha)
                .map_err(|e| AugmentError::InvalidConfig(e.to_string()))?;
            (0..b).map(|_| d.sample(rng) as f32).collect()
        }
        MixupDist::Uniform => (0..b).map(|_| rng.gen::<f32>()).collect(),
    };
    Ok(mixup_with(batch, &perm, &lambdas))
}

/// Crop, mask and mix (training) or center crop only.
pub fn augment_batch(
    batch: &LabeledBatch,
    cfg: &AugmentConfig,
    streams: &RngStreams,
    batch_key: u64,
    enabled: bool,
) -> Result<LabeledBatch> {
    if !enabled {
        return center_crop(batch, cfg.crop_width);
    }
    let cropped = random_crop(batch, cfg, streams)?;
    let masked = spec_augment(&cropped, cfg, streams)?;
    if masked.batch_size() < 2 {
        return Ok(masked);
    }
    mixup(&masked, cfg, &mut streams.rng(batch_key, Stream::Mixup))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_differ_by_key_and_epoch() {
        let s = RngStreams::new(1, 0);
        let a: u64 = s.rng(5, Stream::Crop).gen();
        assert_eq!(a, s.rng(5, Stream::Crop).gen::<u64>());
        assert_ne!(a, s.rng(6, Stream::Crop).gen::<u64>());
        assert_ne!(a, s.rng(5, Stream::Mask).gen::<u64>());
        assert_ne!(a, RngStreams::new(1, 1).rng(5, Stream::Crop).gen::<u64>());
    }
}
