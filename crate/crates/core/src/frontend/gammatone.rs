use rustfft::num_complex::Complex;

use super::mel::log_compress;
use super::{Result, SpectrogramTensor};
use crate::audio::AudioClip;

/// Equivalent rectangular bandwidth in Hz.
pub fn erb(f: f64) -> f64 {
    24.7 * (4.37 * f / 1000.0 + 1.0)
}

fn erb_rate(f: f64) -> f64 {
    21.4 * (4.37 * f / 1000.0 + 1.0).log10()
}

fn erb_rate_inv(e: f64) -> f64 {
    (10f64.powf(e / 21.4) - 1.0) * 1000.0 / 4.37
}

/// `n` centers uniform on the ERB-rate scale, `fmin` and `fmax` included.
pub fn erb_centers(n: usize, fmin: f64, fmax: f64) -> Vec<f64> {
    let (lo, hi) = (erb_rate(fmin), erb_rate(fmax));
    if n == 1 {
        return vec![erb_rate_inv((lo + hi) / 2.0)];
    }
    (0..n).map(|i| erb_rate_inv(lo + (hi - lo) * i as f64 / (n - 1) as f64)).collect()
}

/// Second-order section `(b0, b1, b2, a1, a2)` with `a0 = 1`.
type Biquad = [f64; 5];

/// Four cascaded biquads approximating a 4th-order gammatone per band,
/// each band scaled to unit gain at its center frequency.
#[derive(Debug, Clone)]
pub struct GammatoneBank {
    pub centers: Vec<f64>,
    pub sr: f64,
    sections: Vec<[Biquad; 4]>,
}

const LANES: usize = 8;

impl GammatoneBank {
    pub fn new(n_bands: usize, sr: f64, fmin: f64, fmax: f64) -> Self {
        let centers = erb_centers(n_bands, fmin, fmax);
        let sections = centers.iter().map(|&cf| design(cf, sr)).collect();
        Self { centers, sr, sections }
    }

    /// Complex response of band `b` at `freq`.
    pub fn response(&self, b: usize, freq: f64) -> Complex<f64> {
        cascade_response(&self.sections[b], freq, self.sr)
    }

    /// Log mean-square output per `hop`-sample block, `n_bands × floor(n / hop) × 1`.
    pub fn transform(&self, samples: &[f32], hop: usize) -> Result<SpectrogramTensor> {
        let n_frames = samples.len() / hop;
        if n_frames == 0 {
            return Err(super::FrontendError::ClipTooShort { len: samples.len(), need: hop });
        }
        let n_bands = self.centers.len();
        let mut energy = vec![0.0f64; n_bands * n_frames];
        for group in (0..n_bands).step_by(LANES) {
            let lanes = LANES.min(n_bands - group);
            let mut coef = [[[0.0f64; LANES]; 5]; 4];
            for l in 0..lanes {
                for s in 0..4 {
                    for c in 0..5 {
                        coef[s][c][l] = self.sections[group + l][s][c];
                    }
                }
            }
            let mut z1 = [[0.0f64; LANES]; 4];
            let mut z2 = [[0.0f64; LANES]; 4];
            let mut acc = [0.0f64; LANES];
            for (i, &x) in samples[..n_frames * hop].iter().enumerate() {
                let mut v = [x as f64; LANES];
                for s in 0..4 {
                    let [b0, b1, b2, a1, a2] = &coef[s];
                    for l in 0..LANES {
                        let y = b0[l] * v[l] + z1[s][l];
                        z1[s][l] = b1[l] * v[l] - a1[l] * y + z2[s][l];
                        z2[s][l] = b2[l] * v[l] - a2[l] * y;
                        v[l] = y;
                    }
                }
                for l in 0..LANES {
                    acc[l] += v[l] * v[l];
                }
                if (i + 1) % hop == 0 {
                    let t = i / hop;
                    for l in 0..lanes {
                        energy[(group + l) * n_frames + t] = acc[l] / hop as f64;
                    }
                    acc = [0.0; LANES];
                }
            }
        }
        Ok(SpectrogramTensor::from_fn(n_bands, n_frames, 1, |b, t, _| log_compress(energy[b * n_frames + t]) as f32))
    }
}

/// Cascade coefficients for center `cf`: shared poles at
/// `exp(-B T ± i 2π cf T)` with `B = 1.019 · 2π · ERB(cf)`, and the four
/// zero placements of the classic biquad decomposition.
fn design(cf: f64, sr: f64) -> [Biquad; 4] {
    let t = 1.0 / sr;
    let b = 1.019 * 2.0 * std::f64::consts::PI * erb(cf);
    let arg = 2.0 * std::f64::consts::PI * cf * t;
    let (cos, sin) = (arg.cos(), arg.sin());
    let e = (b * t).exp();
    let a1 = -2.0 * cos / e;
    let a2 = (-2.0 * b * t).exp();
    let r_plus = (3.0 + 2f64.powf(1.5)).sqrt();
    let r_minus = (3.0 - 2f64.powf(1.5)).sqrt();
    let zero = |r: f64| -(t * cos / e + r * t * sin / e);
    let mut secs = [
        [t, zero(r_plus), 0.0, a1, a2],
        [t, zero(-r_plus), 0.0, a1, a2],
        [t, zero(r_minus), 0.0, a1, a2],
        [t, zero(-r_minus), 0.0, a1, a2],
    ];
    let g = cascade_response(&secs, cf, sr).norm();
    for c in secs[0].iter_mut().take(3) {
        *c /= g;
    }
    secs
}

fn cascade_response(secs: &[Biquad; 4], freq: f64, sr: f64) -> Complex<f64> {
    let w = 2.0 * std::f64::consts::PI * freq / sr;
    let z1 = Complex::from_polar(1.0, -w);
    let z2 = z1 * z1;
    secs.iter().fold(Complex::new(1.0, 0.0), |h, [b0, b1, b2, a1, a2]| {
        h * (*b0 + z1 * *b1 + z2 * *b2) / (1.0 + z1 * *a1 + z2 * *a2)
    })
}

/// Gammatone log spectrogram (50 Hz to Nyquist, 1024-sample blocks).
pub fn gammatone(clip: &AudioClip, n_bands: usize) -> Result<SpectrogramTensor> {
    let sr = clip.sample_rate as f64;
    GammatoneBank::new(n_bands, sr, 50.0, sr / 2.0).transform(&clip.samples, 1024)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_gain_at_center() {
        let bank = GammatoneBank::new(16, 32000.0, 50.0, 16000.0);
        for (b, &cf) in bank.centers.iter().enumerate() {
            assert!((bank.response(b, cf).norm() - 1.0).abs() < 1e-9, "band {b}");
        }
    }

    #[test]
    fn erb_scale_round_trip() {
        assert!((erb_rate_inv(erb_rate(1234.5)) - 1234.5).abs() < 1e-8);
        assert!((erb(1000.0) - 132.639).abs() < 1e-9);
    }
}
