use super::{FilterBank, FrontendError, Result, SpectrogramTensor, LOG_FLOOR};

pub fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

pub fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// `10 · log10(max(x, 1e-10))`.
#[inline]
pub fn log_compress(x: f64) -> f64 {
    10.0 * x.max(LOG_FLOOR).log10()
}

/// Area-normalized triangular filters with centers uniform in mel over
/// `[fmin, fmax]`, evaluated on the `n_fft / 2 + 1` DFT bin frequencies.
pub fn mel_filterbank(n_bands: usize, sr: f64, n_fft: usize, fmin: f64, fmax: f64) -> Result<FilterBank> {
    if n_bands == 0 || !(0.0 <= fmin && fmin < fmax && fmax <= sr / 2.0) {
        return Err(FrontendError::InvalidBandRange(format!(
            "need 0 <= fmin < fmax <= sr/2 and n_bands > 0 (fmin {fmin}, fmax {fmax}, sr {sr}, n_bands {n_bands})"
        )));
    }
    let (mlo, mhi) = (hz_to_mel(fmin), hz_to_mel(fmax));
    let edges: Vec<f64> = (0..n_bands + 2)
        .map(|i| mel_to_hz(mlo + (mhi - mlo) * i as f64 / (n_bands + 1) as f64))
        .collect();
    let n_bins = n_fft / 2 + 1;
    let mut weights = vec![0.0; n_bands * n_bins];
    for b in 0..n_bands {
        let (lo, c, hi) = (edges[b], edges[b + 1], edges[b + 2]);
        let norm = 2.0 / (hi - lo);
        for k in 0..n_bins {
            let f = k as f64 * sr / n_fft as f64;
            let w = ((f - lo) / (c - lo)).min((hi - f) / (hi - c));
            if w > 0.0 {
                weights[b * n_bins + k] = w * norm;
            }
        }
    }
    Ok(FilterBank::new(weights, n_bands, n_bins, edges[1..=n_bands].to_vec()))
}

pub(crate) fn log_mel_frames(frames: &[Vec<f64>], bank: &FilterBank) -> SpectrogramTensor {
    let bands: Vec<Vec<f64>> = frames.iter().map(|p| bank.apply(p)).collect();
    SpectrogramTensor::from_fn(bank.n_bands, frames.len(), 1, |b, t, _| log_compress(bands[t][b]) as f32)
}

/// Log band energies `10 · log10(max(bank · power, 1e-10))`.
pub fn log_mel(power: &SpectrogramTensor, bank: &FilterBank) -> Result<SpectrogramTensor> {
    if power.f != bank.n_bins || power.c != 1 {
        return Err(FrontendError::ShapeMismatch(format!(
            "power spectrogram {}x{}x{} does not match a bank over {} bins",
            power.f, power.t, power.c, bank.n_bins
        )));
    }
    let frames: Vec<Vec<f64>> = (0..power.t).map(|t| (0..power.f).map(|k| power.get(k, t, 0) as f64).collect()).collect();
    Ok(log_mel_frames(&frames, bank))
}
