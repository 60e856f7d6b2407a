use realfft::RealFftPlanner;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use super::mel::log_compress;
use super::stft::hann;
use super::{FrontendError, Result, SpectrogramTensor};
use crate::audio::AudioClip;

/// Relative magnitude below which spectral-kernel entries are dropped.
const SPARSITY: f64 = 0.0054;
/// Frames are centered like the non-padded STFT: at `t · hop + 1024`.
const FRAME_LEN: usize = 2048;

/// `f_k = fmin · 2^(k / bins_per_octave)`.
pub fn cqt_frequencies(n_bins: usize, bins_per_octave: usize, fmin: f64) -> Vec<f64> {
    (0..n_bins).map(|k| fmin * 2f64.powf(k as f64 / bins_per_octave as f64)).collect()
}

/// Sparse frequency-domain constant-Q kernels.
pub struct CqtKernel {
    pub freqs: Vec<f64>,
    pub q: f64,
    n_fft: usize,
    hop: usize,
    /// Per bin: (first rfft bin, conjugated kernel values / n_fft).
    kernels: Vec<(usize, Vec<Complex<f64>>)>,
}

impl CqtKernel {
    pub fn new(n_bins: usize, bins_per_octave: usize, fmin: f64, sr: f64, hop: usize) -> Result<Self> {
        let top = fmin * 2f64.powf(n_bins as f64 / bins_per_octave as f64);
        if top > sr / 2.0 {
            return Err(FrontendError::NyquistExceeded { top, nyquist: sr / 2.0 });
        }
        if n_bins == 0 || bins_per_octave == 0 || fmin <= 0.0 {
            return Err(FrontendError::InvalidBandRange("n_bins, bins_per_octave and fmin must be positive".into()));
        }
        let q = 1.0 / (2f64.powf(1.0 / bins_per_octave as f64) - 1.0);
        let freqs = cqt_frequencies(n_bins, bins_per_octave, fmin);
        let lens: Vec<usize> = freqs.iter().map(|f| (q * sr / f).ceil() as usize).collect();
        let n_fft = lens[0].next_power_of_two();
        let fft = FftPlanner::<f64>::new().plan_fft_forward(n_fft);
        let half = n_fft / 2 + 1;
        let mut kernels = Vec::with_capacity(n_bins);
        let mut buf = vec![Complex::new(0.0, 0.0); n_fft];
        for (&f, &len) in freqs.iter().zip(&lens) {
            buf.iter_mut().for_each(|c| *c = Complex::new(0.0, 0.0));
            let w = hann(len);
            let start = n_fft / 2 - len / 2;
            for (i, wi) in w.iter().enumerate() {
                let n = start + i;
                let phase = 2.0 * std::f64::consts::PI * f * (n as f64 - (n_fft / 2) as f64) / sr;
                buf[n] = Complex::from_polar(wi / len as f64, phase);
            }
            fft.process(&mut buf);
            let peak = buf[..half].iter().map(|c| c.norm()).fold(0.0, f64::max);
            let keep = |c: &Complex<f64>| c.norm() >= SPARSITY * peak;
            let lo = buf[..half].iter().position(keep).unwrap_or(0);
            let hi = buf[..half].iter().rposition(keep).map_or(lo, |i| i + 1);
            let vals = buf[lo..hi].iter().map(|c| c.conj() / n_fft as f64).collect();
            kernels.push((lo, vals));
        }
        Ok(Self { freqs, q, n_fft, hop, kernels })
    }

    pub fn n_bins(&self) -> usize {
        self.freqs.len()
    }

    /// Complex constant-Q coefficients of one frame centered at `center`.
    fn frame(&self, samples: &[f32], center: usize, scratch: &mut FrameScratch) -> Vec<Complex<f64>> {
        let start = center as i64 - (self.n_fft / 2) as i64;
        for (i, v) in scratch.input.iter_mut().enumerate() {
            let s = start + i as i64;
            *v = if s >= 0 && (s as usize) < samples.len() { samples[s as usize] as f64 } else { 0.0 };
        }
        scratch
            .fft
            .process_with_scratch(&mut scratch.input, &mut scratch.spectrum, &mut scratch.scratch)
            .expect("fft buffer sizes");
        self.kernels
            .iter()
            .map(|(lo, k)| k.iter().zip(&scratch.spectrum[*lo..]).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// Log power `10 · log10(max(|X_cq|², 1e-10))`, `n_bins × T × 1`.
    pub fn transform(&self, samples: &[f32]) -> Result<SpectrogramTensor> {
        if samples.len() < FRAME_LEN {
            return Err(FrontendError::ClipTooShort { len: samples.len(), need: FRAME_LEN });
        }
        let n_frames = (samples.len() - FRAME_LEN) / self.hop + 1;
        let mut scratch = FrameScratch::new(self.n_fft);
        let frames: Vec<Vec<f64>> = (0..n_frames)
            .map(|t| {
                self.frame(samples, t * self.hop + FRAME_LEN / 2, &mut scratch)
                    .iter()
                    .map(|c| log_compress(c.norm_sqr()))
                    .collect()
            })
            .collect();
        Ok(SpectrogramTensor::from_fn(self.n_bins(), n_frames, 1, |k, t, _| frames[t][k] as f32))
    }
}

struct FrameScratch {
    fft: std::sync::Arc<dyn realfft::RealToComplex<f64>>,
    input: Vec<f64>,
    spectrum: Vec<Complex<f64>>,
    scratch: Vec<Complex<f64>>,
}

impl FrameScratch {
    fn new(n: usize) -> Self {
        let fft = RealFftPlanner::<f64>::new().plan_fft_forward(n);
        let (input, spectrum, scratch) = (fft.make_input_vec(), fft.make_output_vec(), fft.make_scratch_vec());
        Self { fft, input, spectrum, scratch }
    }
}

/// Constant-Q log spectrogram of a 32 kHz clip.
pub fn cqt(clip: &AudioClip, n_bins: usize, bins_per_octave: usize, fmin: f64) -> Result<SpectrogramTensor> {
    CqtKernel::new(n_bins, bins_per_octave, fmin, clip.sample_rate as f64, 1024)?.transform(&clip.samples)
}
