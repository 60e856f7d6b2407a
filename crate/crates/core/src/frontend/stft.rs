use realfft::RealFftPlanner;

use super::{FrontendError, Result, SpectrogramTensor};
use crate::audio::AudioClip;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StftConfig {
    pub window_len: usize,
    pub hop: usize,
    pub fft_len: usize,
    /// Zero-pad `window_len / 2` samples on both sides before framing.
    pub center_pad: bool,
}

impl Default for StftConfig {
    fn default() -> Self {
        Self { window_len: 2048, hop: 1024, fft_len: 2048, center_pad: false }
    }
}

/// Periodic Hann window.
pub(crate) fn hann(n: usize) -> Vec<f64> {
    (0..n).map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos()).collect()
}

/// Power frames `|DFT|²`, one `fft_len / 2 + 1` vector per frame.
pub(crate) fn power_frames(samples: &[f32], cfg: &StftConfig) -> Result<Vec<Vec<f64>>> {
    assert!(cfg.hop > 0 && cfg.hop <= cfg.window_len && cfg.fft_len >= cfg.window_len, "invalid STFT config");
    let pad = if cfg.center_pad { cfg.window_len / 2 } else { 0 };
    let n_padded = samples.len() + 2 * pad;
    if n_padded < cfg.window_len {
        return Err(FrontendError::ClipTooShort { len: samples.len(), need: cfg.window_len - 2 * pad });
    }
    let n_frames = (n_padded - cfg.window_len) / cfg.hop + 1;
    let window = hann(cfg.window_len);
    let fft = RealFftPlanner::<f64>::new().plan_fft_forward(cfg.fft_len);
    let mut input = fft.make_input_vec();
    let mut spectrum = fft.make_output_vec();
    let mut scratch = fft.make_scratch_vec();
    let mut frames = Vec::with_capacity(n_frames);
    for t in 0..n_frames {
        input.iter_mut().for_each(|v| *v = 0.0);
        let start = (t * cfg.hop) as i64 - pad as i64;
        for (i, w) in window.iter().enumerate() {
            let s = start + i as i64;
            if s >= 0 && (s as usize) < samples.len() {
                input[i] = samples[s as usize] as f64 * w;
            }
        }
        fft.process_with_scratch(&mut input, &mut spectrum, &mut scratch).expect("fft buffer sizes");
        frames.push(spectrum.iter().map(|c| c.norm_sqr()).collect());
    }
    Ok(frames)
}

/// Power spectrogram `(fft_len/2 + 1) × T × 1`.
pub fn stft_power(clip: &AudioClip, cfg: &StftConfig) -> Result<SpectrogramTensor> {
    let frames = power_frames(&clip.samples, cfg)?;
    let bins = cfg.fft_len / 2 + 1;
    let t = frames.len();
    Ok(SpectrogramTensor::from_fn(bins, t, 1, |f, ti, _| frames[ti][f] as f32))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn periodic_hann() {
        let w = hann(4);
        for (a, b) in w.iter().zip([0.0, 0.5, 1.0, 0.5]) {
            assert!((a - b).abs() < 1e-12, "{w:?}");
        }
    }

    #[test]
    fn frame_counts() {
        let cfg = StftConfig::default();
        assert_eq!(power_frames(&vec![0.0; 320_000], &cfg).unwrap().len(), 311);
        assert_eq!(power_frames(&vec![0.0; 2048], &cfg).unwrap().len(), 1);
        let centered = StftConfig { center_pad: true, ..cfg };
        assert_eq!(power_frames(&vec![0.0; 320_000], &centered).unwrap().len(), 313);
        assert!(power_frames(&vec![0.0; 2047], &cfg).is_err());
    }
}
