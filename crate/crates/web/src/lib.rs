//! Browser bindings: synthetic clips, spectrograms, augmentation preview
//! and PROD fusion.

use ascnet::audio::{AudioClip, TARGET_RATE};
use ascnet::augment::{augment_batch, AugmentConfig, LabeledBatch, RngStreams};
use ascnet::frontend::{Frontend, FrontendKind};
use ascnet::fusion::{predict_label, prod_fusion, ProbMatrix};
use ascnet::synth::{apply_device, synth_clip, DeviceProfile, SceneSpec};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use wasm_bindgen::prelude::*;

fn js_err(e: impl std::fmt::Display) -> JsError {
    JsError::new(&e.to_string())
}

/// Row-major `bands × frames` matrix.
#[wasm_bindgen]
pub struct Matrix {
    data: Vec<f32>,
    rows: usize,
    cols: usize,
}

#[wasm_bindgen]
impl Matrix {
    #[wasm_bindgen(getter)]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[wasm_bindgen(getter)]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> Vec<f32> {
        self.data.clone()
    }
}

/// Scene `class` recorded on a preset device, 32 kHz mono.
#[wasm_bindgen]
pub fn synth_scene(class: u8, device: &str, seconds: f64, seed: u64) -> Result<Vec<f32>, JsError> {
    if class >= 10 {
        return Err(JsError::new("class must be in 0..10"));
    }
    let profile = DeviceProfile::preset(device).ok_or_else(|| JsError::new("device must be A, B, C, S1, S2 or S3"))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let clip = synth_clip(&SceneSpec::preset(class), seconds, &mut rng).map_err(js_err)?;
    Ok(apply_device(&clip, &profile, &mut rng).map_err(js_err)?.samples)
}

/// Single-channel log spectrogram of 32 kHz samples.
#[wasm_bindgen]
pub fn spectrogram(samples: Vec<f32>, frontend: &str) -> Result<Matrix, JsError> {
    let kind: FrontendKind = frontend.parse().map_err(js_err)?;
    let clip = AudioClip::new(samples, TARGET_RATE).map_err(js_err)?;
    let s = Frontend::new(kind).map_err(js_err)?.log_spectrogram(&clip).map_err(js_err)?;
    Ok(Matrix { data: s.channel(0), rows: s.f, cols: s.t })
}

/// Random crop, one mask and (for a pair) mixup with the time-reversed
/// copy, as the trainer applies them. Input and output are `rows × cols`.
#[wasm_bindgen]
pub fn augment_preview(
    data: Vec<f32>,
    rows: usize,
    cols: usize,
    crop_width: usize,
    mask_len: usize,
    mixup: bool,
    seed: u64,
) -> Result<Matrix, JsError> {
    if data.len() != rows * cols {
        return Err(JsError::new("data length must equal rows × cols"));
    }
    let mut features = data.clone();
    let mut b = 1;
    if mixup {
        for r in 0..rows {
            features.extend(data[r * cols..(r + 1) * cols].iter().rev());
        }
        b = 2;
    }
    let labels = if mixup { vec![1.0, 0.0, 0.0, 1.0] } else { vec![1.0, 0.0] };
    let batch =
        LabeledBatch::new(features, [b, rows, cols, 1], labels, 2, vec![String::new(); b], (0..b as u64).collect())
            .map_err(js_err)?;
    let cfg = AugmentConfig { crop_width, mask_len, rng_seed: seed, ..AugmentConfig::default() };
    let out = augment_batch(&batch, &cfg, &RngStreams::new(seed, 0), 0, true).map_err(js_err)?;
    Ok(Matrix { data: out.sample(0).to_vec(), rows, cols: crop_width })
}

/// PROD fusion of `systems` probability rows over `classes` classes; the
/// result holds the fused scores followed by the predicted label.
#[wasm_bindgen]
pub fn prod_fuse(probs: Vec<f64>, systems: usize, classes: usize) -> Result<Vec<f64>, JsError> {
    if systems == 0 || classes == 0 || probs.len() != systems * classes {
        return Err(JsError::new("expected systems × classes probabilities"));
    }
    let pm = ProbMatrix::new(probs, (0..systems).map(|s| format!("s{s}")).collect(), vec!["x".into()], classes)
        .map_err(js_err)?;
    let mut fused = prod_fusion(&pm);
    let label = predict_label(&fused, classes)[0];
    fused.push(label as f64);
    Ok(fused)
}
