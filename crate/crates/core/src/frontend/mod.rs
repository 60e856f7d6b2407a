//! Spectrogram front-ends: log-Mel, constant-Q and gammatone, each
//! stacked with delta and delta-delta into a `128 × 305 × 3` block.

mod cache;
mod cqt;
mod delta;
mod gammatone;
mod mel;
mod stft;

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::audio::{AudioClip, TARGET_RATE};

pub use cache::{read_cache, write_cache, CacheError, CacheHeader, CacheReader, CacheRecord, CacheWriter};
pub use cqt::{cqt, cqt_frequencies, CqtKernel};
pub use delta::{delta, stack_3ch, stack_3ch_to, DELTA_WIDTH};
pub use gammatone::{erb, erb_centers, gammatone, GammatoneBank};
pub use mel::{hz_to_mel, log_compress, log_mel, mel_filterbank, mel_to_hz};
pub use stft::{stft_power, StftConfig};

pub const N_BANDS: usize = 128;
pub const TARGET_FRAMES: usize = 305;
pub const LOG_FLOOR: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum FrontendError {
    #[error("clip too short: {len} samples, need at least {need}")]
    ClipTooShort { len: usize, need: usize },
    #[error("invalid band range: {0}")]
    InvalidBandRange(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("highest constant-Q bin {top:.1} Hz exceeds Nyquist {nyquist:.1} Hz")]
    NyquistExceeded { top: f64, nyquist: f64 },
    #[error("need at least {need} frames, got {got}")]
    TooFewFrames { got: usize, need: usize },
    #[error("expected {expected} Hz audio, got {got} Hz")]
    SampleRate { expected: u32, got: u32 },
    #[error("unknown frontend '{0}' (expected logmel, cqt, gam)")]
    UnknownFrontend(String),
}

pub type Result<T> = std::result::Result<T, FrontendError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FrontendKind {
    LogMel,
    Cqt,
    Gammatone,
}

impl FrontendKind {
    pub const ALL: [FrontendKind; 3] = [FrontendKind::LogMel, FrontendKind::Cqt, FrontendKind::Gammatone];

    pub fn id(self) -> u8 {
        match self {
            FrontendKind::LogMel => 0,
            FrontendKind::Cqt => 1,
            FrontendKind::Gammatone => 2,
        }
    }

    pub fn from_id(id: u8) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.id() == id)
    }
}

impl fmt::Display for FrontendKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FrontendKind::LogMel => "logmel",
            FrontendKind::Cqt => "cqt",
            FrontendKind::Gammatone => "gam",
        })
    }
}

impl FromStr for FrontendKind {
    type Err = FrontendError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "logmel" | "mel" => Ok(FrontendKind::LogMel),
            "cqt" => Ok(FrontendKind::Cqt),
            "gam" | "gammatone" => Ok(FrontendKind::Gammatone),
            _ => Err(FrontendError::UnknownFrontend(s.to_string())),
        }
    }
}

/// `F × T × C` feature block, row-major with channel fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrogramTensor {
    pub data: Vec<f32>,
    pub f: usize,
    pub t: usize,
    pub c: usize,
    pub frontend: Option<FrontendKind>,
}

impl SpectrogramTensor {
    pub fn zeros(f: usize, t: usize, c: usize) -> Self {
        Self { data: vec![0.0; f * t * c], f, t, c, frontend: None }
    }

    pub fn from_fn(f: usize, t: usize, c: usize, mut g: impl FnMut(usize, usize, usize) -> f32) -> Self {
        let mut s = Self::zeros(f, t, c);
        for fi in 0..f {
            for ti in 0..t {
                for ci in 0..c {
                    s.data[(fi * t + ti) * c + ci] = g(fi, ti, ci);
                }
            }
        }
        s
    }

    pub fn shape(&self) -> [usize; 3] {
        [self.f, self.t, self.c]
    }

    #[inline]
    pub fn get(&self, f: usize, t: usize, c: usize) -> f32 {
        self.data[(f * self.t + t) * self.c + c]
    }

    #[inline]
    pub fn set(&mut self, f: usize, t: usize, c: usize, v: f32) {
        self.data[(f * self.t + t) * self.c + c] = v;
    }

    /// One channel as an `F × T` row-major matrix.
    pub fn channel(&self, c: usize) -> Vec<f32> {
        (0..self.f * self.t).map(|i| self.data[i * self.c + c]).collect()
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Filterbank over FFT bins with non-negative weights.
#[derive(Debug, Clone)]
pub struct FilterBank {
    /// `n_bands × n_bins`, row-major.
    pub weights: Vec<f64>,
    pub n_bands: usize,
    pub n_bins: usize,
    pub band_centers: Vec<f64>,
    /// Nonzero column range of each row.
    spans: Vec<(usize, usize)>,
}

impl FilterBank {
    pub(crate) fn new(weights: Vec<f64>, n_bands: usize, n_bins: usize, band_centers: Vec<f64>) -> Self {
        let spans = (0..n_bands)
            .map(|b| {
                let row = &weights[b * n_bins..(b + 1) * n_bins];
                let lo = row.iter().position(|&w| w != 0.0).unwrap_or(0);
                let hi = row.iter().rposition(|&w| w != 0.0).map_or(0, |i| i + 1);
                (lo, hi.max(lo))
            })
            .collect();
        Self { weights, n_bands, n_bins, band_centers, spans }
    }

    pub fn row(&self, b: usize) -> &[f64] {
        &self.weights[b * self.n_bins..(b + 1) * self.n_bins]
    }

    /// `weights · frame` for one power frame.
    pub fn apply(&self, frame: &[f64]) -> Vec<f64> {
        (0..self.n_bands)
            .map(|b| {
                let (lo, hi) = self.spans[b];
                self.row(b)[lo..hi].iter().zip(&frame[lo..hi]).map(|(w, p)| w * p).sum()
            })
            .collect()
    }
}

fn check_rate(clip: &AudioClip) -> Result<()> {
    if clip.sample_rate != TARGET_RATE {
        return Err(FrontendError::SampleRate { expected: TARGET_RATE, got: clip.sample_rate });
    }
    Ok(())
}

/// Feature extractor with precomputed filterbanks.
pub struct Frontend {
    kind: FrontendKind,
    target_frames: usize,
    stft: StftConfig,
    mel: Option<FilterBank>,
    cqt: Option<CqtKernel>,
    gam: Option<GammatoneBank>,
}

impl Frontend {
    pub fn new(kind: FrontendKind) -> Result<Self> {
        let sr = TARGET_RATE as f64;
        let stft = StftConfig::default();
        let mut fe = Self { kind, target_frames: TARGET_FRAMES, stft, mel: None, cqt: None, gam: None };
        match kind {
            FrontendKind::LogMel => fe.mel = Some(mel_filterbank(N_BANDS, sr, stft.fft_len, 0.0, sr / 2.0)?),
            FrontendKind::Cqt => fe.cqt = Some(CqtKernel::new(N_BANDS, 24, 32.7, sr, stft.hop)?),
            FrontendKind::Gammatone => fe.gam = Some(GammatoneBank::new(N_BANDS, sr, 50.0, sr / 2.0)),
        }
        Ok(fe)
    }

    pub fn with_target_frames(mut self, t: usize) -> Self {
        self.target_frames = t;
        self
    }

    pub fn kind(&self) -> FrontendKind {
        self.kind
    }

    /// Single-channel log spectrogram at the native frame count.
    pub fn log_spectrogram(&self, clip: &AudioClip) -> Result<SpectrogramTensor> {
        check_rate(clip)?;
        let mut s = match self.kind {
            FrontendKind::LogMel => {
                let frames = stft::power_frames(&clip.samples, &self.stft)?;
                mel::log_mel_frames(&frames, self.mel.as_ref().expect("mel bank"))
            }
            FrontendKind::Cqt => self.cqt.as_ref().expect("cqt kernel").transform(&clip.samples)?,
            FrontendKind::Gammatone => self.gam.as_ref().expect("gammatone bank").transform(&clip.samples, self.stft.hop)?,
        };
        s.frontend = Some(self.kind);
        Ok(s)
    }

    /// `128 × target_frames × 3` block.
    pub fn extract(&self, clip: &AudioClip) -> Result<SpectrogramTensor> {
        let s = self.log_spectrogram(clip)?;
        let mut out = stack_3ch_to(&s, self.target_frames)?;
        out.frontend = Some(self.kind);
        Ok(out)
    }
}
