//! WAV ingestion, resampling to the pipeline rate and 10 s segmentation.

use std::path::Path;

use thiserror::Error;

pub const TARGET_RATE: u32 = 32_000;
pub const SEGMENT_LEN: usize = 320_000;

#[derive(Debug, Error)]
pub enum AudioError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed WAV header: {0}")]
    MalformedHeader(String),
    #[error("unsupported encoding: {0}")]
    UnsupportedEncoding(String),
    #[error("audio contains no samples")]
    EmptyAudio,
    #[error("clip too short: {len} samples, need at least {need}")]
    ClipTooShort { len: usize, need: usize },
    #[error("non-finite sample at index {0}")]
    NonFinite(usize),
}

pub type Result<T> = std::result::Result<T, AudioError>;

/// Mono audio with scene and device metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    pub samples: Vec<f32>,
    pub sample_rate: u32,
    pub scene_label: Option<u8>,
    pub device_id: String,
}

impl AudioClip {
    pub fn new(samples: Vec<f32>, sample_rate: u32) -> Result<Self> {
        if samples.is_empty() {
            return Err(AudioError::EmptyAudio);
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(AudioError::NonFinite(i));
        }
        Ok(Self { samples, sample_rate, scene_label: None, device_id: String::new() })
    }

    pub fn with_meta(mut self, scene_label: Option<u8>, device_id: &str) -> Self {
        self.scene_label = scene_label;
        self.device_id = device_id.to_string();
        self
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

fn map_hound(e: hound::Error) -> AudioError {
    match e {
        hound::Error::IoError(e) => AudioError::Io(e),
        hound::Error::FormatError(m) => AudioError::MalformedHeader(m.to_string()),
        hound::Error::Unsupported => AudioError::UnsupportedEncoding("format not supported by the WAV reader".into()),
        other => AudioError::MalformedHeader(other.to_string()),
    }
}

/// Reads 16-bit PCM or 32-bit float WAV; channels are averaged to mono.
pub fn load_wav(path: impl AsRef<Path>) -> Result<AudioClip> {
    let reader = hound::WavReader::open(path).map_err(map_hound)?;
    read_wav(reader)
}

pub fn read_wav<R: std::io::Read>(mut reader: hound::WavReader<R>) -> Result<AudioClip> {
    let spec = reader.spec();
    let channels = spec.channels as usize;
    if channels == 0 || spec.sample_rate == 0 {
        return Err(AudioError::MalformedHeader("zero channels or sample rate".into()));
    }
    let interleaved: Vec<f32> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Int, 16) => reader
            .samples::<i16>()
            .map(|s| s.map(|v| v as f32 / 32768.0))
            .collect::<std::result::Result<_, _>>()
            .map_err(map_hound)?,
        (hound::SampleFormat::Float, 32) => {
            reader.samples::<f32>().collect::<std::result::Result<_, _>>().map_err(map_hound)?
        }
        (fmt, bits) => return Err(AudioError::UnsupportedEncoding(format!("{fmt:?} {bits}-bit"))),
    };
    if interleaved.len() < channels {
        return Err(AudioError::EmptyAudio);
    }
    let mono: Vec<f32> = if channels == 1 {
        interleaved
    } else {
        interleaved
            .chunks_exact(channels)
            .map(|frame| frame.iter().sum::<f32>() / channels as f32)
            .collect()
    };
    AudioClip::new(mono, spec.sample_rate)
}

/// Writes 16-bit PCM mono, clipping to [-1, 1).
pub fn write_wav(path: impl AsRef<Path>, clip: &AudioClip) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: clip.sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut w = hound::WavWriter::create(path, spec).map_err(map_hound)?;
    for &s in &clip.samples {
        let v = (s as f64 * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        w.write_sample(v).map_err(map_hound)?;
    }
    w.finalize().map_err(map_hound)
}

const KAISER_BETA: f64 = 8.6;
const TAPS: usize = 64;

/// Zeroth-order modified Bessel function of the first kind (power series).
fn bessel_i0(x: f64) -> f64 {
    let mut sum = 1.0;
    let mut term = 1.0;
    let q = x * x / 4.0;
    for k in 1..200 {
        term *= q / (k * k) as f64;
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Polyphase windowed-sinc resampler between two integer rates.
pub struct Resampler {
    up: u64,
    down: u64,
    /// `up` phases of `TAPS` coefficients.
    table: Vec<f64>,
}

impl Resampler {
    pub fn new(from: u32, to: u32) -> Self {
        let g = gcd(from as u64, to as u64);
        let (up, down) = (to as u64 / g, from as u64 / g);
        // Cutoff relative to the input Nyquist; lowered when decimating.
        let fc = (to as f64 / from as f64).min(1.0);
        let half = (TAPS / 2) as f64;
        let i0b = bessel_i0(KAISER_BETA);
        let mut table = vec![0.0; up as usize * TAPS];
        for p in 0..up as usize {
            let frac = p as f64 / up as f64;
            let row = &mut table[p * TAPS..(p + 1) * TAPS];
            for (j, c) in row.iter_mut().enumerate() {
                // Tap j multiplies input sample floor(t) - (TAPS/2 - 1) + j.
                let x = frac + (TAPS / 2 - 1) as f64 - j as f64;
                let r = x / half;
                let w = if r.abs() <= 1.0 { bessel_i0(KAISER_BETA * (1.0 - r * r).sqrt()) / i0b } else { 0.0 };
                let arg = std::f64::consts::PI * fc * x;
                let sinc = if arg.abs() < 1e-12 { 1.0 } else { arg.sin() / arg };
                *c = fc * sinc * w;
            }
            let s: f64 = row.iter().sum();
            row.iter_mut().for_each(|c| *c /= s);
        }
        Self { up, down, table }
    }

    /// Output length `round(n · to / from)`.
    pub fn output_len(&self, n: usize) -> usize {
        ((n as u128 * self.up as u128 * 2 + self.down as u128) / (2 * self.down as u128)) as usize
    }

    pub fn process(&self, input: &[f32]) -> Vec<f32> {
        let n_out = self.output_len(input.len());
        let n = input.len() as i64;
        let mut out = Vec::with_capacity(n_out);
        for j in 0..n_out as u64 {
            let pos = j * self.down;
            let base = (pos / self.up) as i64 - (TAPS / 2 - 1) as i64;
            let phase = (pos % self.up) as usize;
            let coefs = &self.table[phase * TAPS..(phase + 1) * TAPS];
            let mut acc = 0.0f64;
            if base >= 0 && base + (TAPS as i64) <= n {
                let seg = &input[base as usize..base as usize + TAPS];
                for (c, &x) in coefs.iter().zip(seg) {
                    acc += c * x as f64;
                }
            } else {
                for (k, c) in coefs.iter().enumerate() {
                    let i = base + k as i64;
                    if (0..n).contains(&i) {
                        acc += c * input[i as usize] as f64;
                    }
                }
            }
            out.push(acc as f32);
        }
        out
    }
}

/// Resamples to `rate`; returns the clip unchanged when already there.
pub fn resample(clip: &AudioClip, rate: u32) -> AudioClip {
    if clip.sample_rate == rate {
        return clip.clone();
    }
    let samples = Resampler::new(clip.sample_rate, rate).process(&clip.samples);
    AudioClip { samples, sample_rate: rate, scene_label: clip.scene_label, device_id: clip.device_id.clone() }
}

pub fn resample_to_32k(clip: &AudioClip) -> AudioClip {
    resample(clip, TARGET_RATE)
}

/// Consecutive non-overlapping 10 s windows; the remainder is dropped.
pub fn segment_10s(clip: &AudioClip) -> Result<Vec<AudioClip>> {
    if clip.len() < SEGMENT_LEN {
        return Err(AudioError::ClipTooShort { len: clip.len(), need: SEGMENT_LEN });
    }
    Ok(clip
        .samples
        .chunks_exact(SEGMENT_LEN)
        .map(|s| AudioClip {
            samples: s.to_vec(),
            sample_rate: clip.sample_rate,
            scene_label: clip.scene_label,
            device_id: clip.device_id.clone(),
        })
        .collect())
}
