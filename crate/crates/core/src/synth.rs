//! Synthetic scene audio with simulated recording devices.
//!
//! Each of the ten scene classes is a fixed recipe of tones, colored
//! noise and transient bursts; only phases, noise realizations and burst
//! timings vary between clips. Devices apply a piecewise-linear gain
//! curve in the frequency domain plus a noise floor.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use realfft::RealFftPlanner;
use thiserror::Error;

use crate::audio::{write_wav, AudioClip, AudioError, TARGET_RATE};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("i/o failure: {0}")]
    IoFailure(String),
    #[error("invalid synthesis config: {0}")]
    InvalidConfig(String),
}

impl From<std::io::Error> for SynthError {
    fn from(e: std::io::Error) -> Self {
        SynthError::IoFailure(e.to_string())
    }
}

impl From<AudioError> for SynthError {
    fn from(e: AudioError) -> Self {
        SynthError::IoFailure(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, SynthError>;

pub const SCENE_NAMES: [&str; 10] = [
    "airport",
    "bus",
    "metro",
    "metro_station",
    "park",
    "public_square",
    "shopping_mall",
    "street_pedestrian",
    "street_traffic",
    "tram",
];

#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub class_id: u8,
    /// `(frequency Hz, amplitude)`.
    pub tonal_components: Vec<(f64, f64)>,
    /// Noise spectral slope in dB per octave (relative to 1 kHz).
    pub noise_color: f64,
    /// Noise RMS relative to a unit sine's RMS; 0 disables noise.
    pub noise_level: f64,
    /// Mean transient bursts per second; 0 disables bursts.
    pub event_rate: f64,
}

impl SceneSpec {
    /// Fixed recipe for class `c` in `0..10`.
    pub fn preset(c: u8) -> Self {
        let k = c as f64;
        let f1 = 110.0 * 1.22f64.powf(k);
        Self {
            class_id: c,
            tonal_components: vec![(f1, 1.0), (f1 * 2.5, 0.45), (2000.0 + 650.0 * k, 0.2)],
            noise_color: -6.0 + 1.3 * k,
            noise_level: 0.35,
            event_rate: [0.0, 2.0, 0.5, 1.0, 3.0][c as usize % 5],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.tonal_components.is_empty() {
            return Err(SynthError::InvalidConfig("scene needs at least one tonal component".into()));
        }
        if self.tonal_components.iter().any(|&(f, _)| !(f > 0.0 && f < 16_000.0)) {
            return Err(SynthError::InvalidConfig("tone frequencies must lie in (0, 16000) Hz".into()));
        }
        Ok(())
    }
}

/// Frequency-domain filter applied to the whole signal by real FFT.
fn filter_fft(x: &[f32], sr: f64, gain: impl Fn(f64) -> f64) -> Vec<f32> {
    let n = x.len();
    let mut planner = RealFftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let mut buf: Vec<f64> = x.iter().map(|&v| v as f64).collect();
    let mut spec = fwd.make_output_vec();
    fwd.process(&mut buf, &mut spec).expect("fft sizes");
    for (k, c) in spec.iter_mut().enumerate() {
        *c *= gain(k as f64 * sr / n as f64);
    }
    // Imaginary parts at DC (and Nyquist for even n) must be zero for the inverse.
    spec[0].im = 0.0;
    if n % 2 == 0 {
        let last = spec.len() - 1;
        spec[last].im = 0.0;
    }
    inv.process(&mut spec, &mut buf).expect("fft sizes");
    buf.iter().map(|&v| (v / n as f64) as f32).collect()
}

/// Tones, colored noise and decaying noise bursts, peak-normalized to 0.9.
pub fn synth_clip<R: Rng + ?Sized>(spec: &SceneSpec, duration_s: f64, rng: &mut R) -> Result<AudioClip> {
    spec.validate()?;
    let sr = TARGET_RATE as f64;
    let n = (duration_s * sr).round() as usize;
    if n == 0 {
        return Err(SynthError::InvalidConfig("duration must be positive".into()));
    }
    let mut x = vec![0.0f64; n];
    for &(f, a) in &spec.tonal_components {
        let phase = rng.gen_range(0.0..std::f64::consts::TAU);
        let w = std::f64::consts::TAU * f / sr;
        for (i, v) in x.iter_mut().enumerate() {
            *v += a * (w * i as f64 + phase).sin();
        }
    }
    if spec.noise_level > 0.0 {
        let white: Vec<f32> = (0..n).map(|_| StandardNormal.sample(rng)).collect();
        let slope = spec.noise_color;
        let colored = filter_fft(&white, sr, |f| 10f64.powf(slope * (f.max(20.0) / 1000.0).log2() / 20.0));
        let rms = (colored.iter().map(|&v| (v as f64).powi(2)).sum::<f64>() / n as f64).sqrt().max(1e-12);
        let k = spec.noise_level * std::f64::consts::FRAC_1_SQRT_2 / rms;
        for (v, c) in x.iter_mut().zip(colored) {
            *v += k * c as f64;
        }
    }
    if spec.event_rate > 0.0 {
        let gap = Exp::new(spec.event_rate).map_err(|e| SynthError::InvalidConfig(e.to_string()))?;
        let mut t = gap.sample(rng);
        let tau = 0.015 * sr;
        while t < duration_s {
            let start = (t * sr) as usize;
            let amp = rng.gen_range(0.8..1.6);
            for i in 0..(6.0 * tau) as usize {
                if start + i >= n {
                    break;
                }
                let e: f64 = StandardNormal.sample(rng);
                x[start + i] += amp * e * (-(i as f64) / tau).exp();
            }
            t += gap.sample(rng);
        }
    }
    let peak = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let norm = if peak > 0.0 { 0.9 / peak } else { 0.0 };
    let samples = x.iter().map(|v| (v * norm) as f32).collect();
    Ok(AudioClip::new(samples, TARGET_RATE)?.with_meta(Some(spec.class_id), ""))
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeviceProfile {
    pub device_id: String,
    /// `(frequency Hz, gain dB)` knots, linearly interpolated; flat
    /// extension beyond the end knots.
    pub response: Vec<(f64, f64)>,
    /// Additive white noise level in dBFS RMS; `-inf` disables it.
    pub noise_floor: f64,
}

impl DeviceProfile {
    pub fn new(id: &str, response: Vec<(f64, f64)>, noise_floor: f64) -> Result<Self> {
        let p = Self { device_id: id.to_string(), response, noise_floor };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.response.is_empty() {
            return Err(SynthError::InvalidConfig("device response needs at least one knot".into()));
        }
        if self.response.windows(2).any(|w| w[1].0 < w[0].0) {
            return Err(SynthError::InvalidConfig("response knots must be sorted by frequency".into()));
        }
        if self.response.iter().any(|&(f, g)| !(0.0..=16_000.0).contains(&f) || !(-40.0..=12.0).contains(&g)) {
            return Err(SynthError::InvalidConfig("knots must lie in [0, 16000] Hz with gains in [-40, 12] dB".into()));
        }
        Ok(())
    }

    pub fn gain_db(&self, f: f64) -> f64 {
        let r = &self.response;
        if f <= r[0].0 {
            return r[0].1;
        }
        for w in r.windows(2) {
            let ((f0, g0), (f1, g1)) = (w[0], w[1]);
            if f <= f1 {
                return if f1 > f0 { g0 + (g1 - g0) * (f - f0) / (f1 - f0) } else { g1 };
            }
        }
        r[r.len() - 1].1
    }

    /// Six presets: flat A, mild tilts B and C, aggressive shelves S1–S3.
    pub fn preset(id: &str) -> Option<Self> {
        let (resp, floor) = match id {
            "A" => (vec![(0.0, 0.0), (16_000.0, 0.0)], -80.0),
            "B" => (vec![(0.0, 3.0), (16_000.0, -6.0)], -75.0),
            "C" => (vec![(0.0, -6.0), (1_000.0, 0.0), (16_000.0, 3.0)], -75.0),
            "S1" => (vec![(0.0, 0.0), (3_000.0, 0.0), (4_000.0, -30.0), (16_000.0, -30.0)], -65.0),
            "S2" => (vec![(0.0, -30.0), (400.0, -30.0), (800.0, 0.0), (16_000.0, 6.0)], -65.0),
            "S3" => (vec![(0.0, 6.0), (800.0, 6.0), (1_200.0, -25.0), (4_000.0, -25.0), (6_000.0, 0.0), (16_000.0, 0.0)], -60.0),
            _ => return None,
        };
        Some(Self { device_id: id.to_string(), response: resp, noise_floor: floor })
    }

    pub const PRESET_IDS: [&'static str; 6] = ["A", "B", "C", "S1", "S2", "S3"];
}

/// Applies the device gain curve and noise floor; preserves length and rate.
pub fn apply_device<R: Rng + ?Sized>(clip: &AudioClip, profile: &DeviceProfile, rng: &mut R) -> Result<AudioClip> {
    profile.validate()?;
    let sr = clip.sample_rate as f64;
    let mut y = filter_fft(&clip.samples, sr, |f| 10f64.powf(profile.gain_db(f) / 20.0));
    if profile.noise_floor.is_finite() {
        let sigma = 10f64.powf(profile.noise_floor / 20.0);
        for v in y.iter_mut() {
            let e: f64 = StandardNormal.sample(rng);
            *v += (sigma * e) as f32;
        }
    }
    Ok(AudioClip {
        samples: y,
        sample_rate: clip.sample_rate,
        scene_label: clip.scene_label,
        device_id: profile.device_id.clone(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Eval,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Eval => "eval",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestRow {
    pub path: String,
    pub scene_label: u8,
    pub device_id: String,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub n_per_class: usize,
    /// Clips per class and device in the evaluation split.
    pub n_eval_per_class: usize,
    pub train_devices: Vec<String>,
    pub eval_devices: Vec<String>,
    pub seed: u64,
    pub duration_s: f64,
    pub n_classes: usize,
}

impl SynthConfig {
    pub fn new(n_per_class: usize, train_devices: &[&str], eval_devices: &[&str], seed: u64) -> Self {
        Self {
            n_per_class,
            n_eval_per_class: n_per_class,
            train_devices: train_devices.iter().map(|s| s.to_string()).collect(),
            eval_devices: eval_devices.iter().map(|s| s.to_string()).collect(),
            seed,
            duration_s: 10.0,
            n_classes: 10,
        }
    }
}

fn clip_seed(seed: u64, parts: &[u64]) -> u64 {
    let mut h = seed ^ 0x5DEE_CE66_D1CE_4E5B;
    for &p in parts {
        h = (h ^ p).wrapping_mul(0x9E37_79B9_7F4A_7C15);
        h ^= h >> 29;
    }
    h
}

/// Generates one clip of `class` on `device`, fully determined by its key.
pub fn render(cfg: &SynthConfig, split: Split, class: u8, device: &DeviceProfile, index: usize) -> Result<AudioClip> {
    let dev_key = device.device_id.bytes().fold(0u64, |h, b| h.wrapping_mul(131).wrapping_add(b as u64));
    let key = clip_seed(cfg.seed, &[split as u64, class as u64, dev_key, index as u64]);
    let mut rng = ChaCha8Rng::seed_from_u64(key);
    let clean = synth_clip(&SceneSpec::preset(class), cfg.duration_s, &mut rng)?;
    apply_device(&clean, device, &mut rng)
}

pub fn manifest_csv(rows: &[ManifestRow]) -> String {
    let mut s = String::from("path,scene_label,device_id,split\n");
    for r in rows {
        let _ = writeln!(s, "{},{},{},{}", r.path, r.scene_label, r.device_id, r.split.as_str());
    }
    s
}

pub fn parse_manifest(text: &str) -> Result<Vec<ManifestRow>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == "path,scene_label,device_id,split" => {}
        _ => return Err(SynthError::InvalidConfig("manifest header must be path,scene_label,device_id,split".into())),
    }
    lines
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| {
            let f: Vec<&str> = l.split(',').collect();
            let bad = || SynthError::InvalidConfig(format!("manifest row {}: '{l}'", i + 1));
            if f.len() != 4 {
                return Err(bad());
            }
            let split = match f[3].trim() {
                "train" => Split::Train,
                "eval" => Split::Eval,
                _ => return Err(bad()),
            };
            Ok(ManifestRow {
                path: f[0].to_string(),
                scene_label: f[1].trim().parse().map_err(|_| bad())?,
                device_id: f[2].to_string(),
                split,
            })
        })
        .collect()
}

/// Writes WAVs under `out_dir/audio/` and `out_dir/manifest.csv`.
pub fn make_dataset(out_dir: &Path, cfg: &SynthConfig) -> Result<Vec<ManifestRow>> {
    if cfg.train_devices.is_empty() || cfg.eval_devices.is_empty() {
        return Err(SynthError::InvalidConfig("device sets must be nonempty".into()));
    }
    if cfg.n_classes == 0 || cfg.n_classes > SCENE_NAMES.len() {
        return Err(SynthError::InvalidConfig(format!("n_classes must be in 1..=10, got {}", cfg.n_classes)));
    }
    let lookup = |id: &String| {
        DeviceProfile::preset(id).ok_or_else(|| SynthError::InvalidConfig(format!("unknown device '{id}'")))
    };
    let mut rows = Vec::new();
    for (split, devices, per_class) in
        [(Split::Train, &cfg.train_devices, cfg.n_per_class), (Split::Eval, &cfg.eval_devices, cfg.n_eval_per_class)]
    {
        let dir: PathBuf = out_dir.join("audio").join(split.as_str());
        std::fs::create_dir_all(&dir)?;
        for dev_id in devices {
            let profile = lookup(dev_id)?;
            for class in 0..cfg.n_classes as u8 {
                for k in 0..per_class {
                    let clip = render(cfg, split, class, &profile, k)?;
                    let name = format!("{}-{}-{:03}.wav", SCENE_NAMES[class as usize], dev_id, k);
                    write_wav(dir.join(&name), &clip)?;
                    rows.push(ManifestRow {
                        path: format!("audio/{}/{name}", split.as_str()),
                        scene_label: class,
                        device_id: dev_id.clone(),
                        split,
                    });
                }
            }
        }
    }
    std::fs::write(out_dir.join("manifest.csv"), manifest_csv(&rows))?;
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_are_valid() {
        for c in 0..10 {
            SceneSpec::preset(c).validate().unwrap();
        }
        for id in DeviceProfile::PRESET_IDS {
            DeviceProfile::preset(id).unwrap().validate().unwrap();
        }
    }

    #[test]
    fn gain_interpolation() {
        let p = DeviceProfile::preset("S1").unwrap();
        assert_eq!(p.gain_db(1_000.0), 0.0);
        assert!((p.gain_db(3_500.0) + 15.0).abs() < 1e-12);
        assert_eq!(p.gain_db(10_000.0), -30.0);
    }

    #[test]
    fn manifest_round_trip() {
        let rows = vec![ManifestRow { path: "a.wav".into(), scene_label: 3, device_id: "S2".into(), split: Split::Eval }];
        assert_eq!(parse_manifest(&manifest_csv(&rows)).unwrap(), rows);
    }
}
