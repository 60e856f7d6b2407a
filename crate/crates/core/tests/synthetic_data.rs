use ascnet::audio::{load_wav, AudioClip, TARGET_RATE};
use ascnet::frontend::{Frontend, FrontendKind};
use ascnet::synth::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn pure_tone(f: f64) -> SceneSpec {
    SceneSpec { class_id: 0, tonal_components: vec![(f, 1.0)], noise_color: 0.0, noise_level: 0.0, event_rate: 0.0 }
}

fn band_means(fe: &Frontend, clip: &AudioClip) -> Vec<f64> {
    let s = fe.log_spectrogram(clip).unwrap();
    (0..s.f).map(|f| (0..s.t).map(|t| s.get(f, t, 0) as f64).sum::<f64>() / s.t as f64).collect()
}

#[test]
fn degenerate_spec_is_scaled_sine() {
    let f = 1000.0;
    let clip = synth_clip(&pure_tone(f), 10.0, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
    assert_eq!(clip.len(), 320_000);
    assert_eq!(clip.sample_rate, TARGET_RATE);
    let phase = ChaCha8Rng::seed_from_u64(4).gen_range(0.0..std::f64::consts::TAU);
    let w = std::f64::consts::TAU * f / 32_000.0;
    let raw: Vec<f64> = (0..clip.len()).map(|i| (w * i as f64 + phase).sin()).collect();
    let peak = raw.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    for (i, (&got, r)) in clip.samples.iter().zip(&raw).enumerate() {
        assert!((got as f64 - 0.9 * r / peak).abs() < 1e-5, "sample {i}");
    }
    let got_peak = clip.samples.iter().fold(0.0f32, |m, v| m.max(v.abs()));
    assert!((got_peak - 0.9).abs() < 1e-6);
}

#[test]
fn same_seed_same_samples() {
    let spec = SceneSpec::preset(4);
    let a = synth_clip(&spec, 2.0, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
    let b = synth_clip(&spec, 2.0, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
    let c = synth_clip(&spec, 2.0, &mut ChaCha8Rng::seed_from_u64(10)).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
    assert_eq!(a.scene_label, Some(4));
}

#[test]
fn invalid_specs_rejected() {
    let mut s = pure_tone(17_000.0);
    assert!(s.validate().is_err());
    s.tonal_components.clear();
    assert!(matches!(synth_clip(&s, 1.0, &mut ChaCha8Rng::seed_from_u64(0)), Err(SynthError::InvalidConfig(_))));
    assert!(DeviceProfile::new("X", vec![(0.0, -50.0)], -80.0).is_err());
    assert!(DeviceProfile::new("X", vec![(0.0, 0.0), (20_000.0, 0.0)], -80.0).is_err());
    assert!(DeviceProfile::preset("S4").is_none());
}

#[test]
fn classes_separable_by_nearest_centroid() {
    let fe = Frontend::new(FrontendKind::LogMel).unwrap();
    let cfg = SynthConfig::new(0, &["A"], &["A"], 77);
    let dev = DeviceProfile::preset("A").unwrap();
    let mut centroids = Vec::new();
    for c in 0..10u8 {
        let mut acc = vec![0.0; 128];
        for k in 0..3 {
            let m = band_means(&fe, &render(&cfg, Split::Train, c, &dev, k).unwrap());
            acc.iter_mut().zip(m).for_each(|(a, v)| *a += v / 3.0);
        }
        centroids.push(acc);
    }
    let mut correct = 0;
    for c in 0..10u8 {
        for k in 0..10 {
            let m = band_means(&fe, &render(&cfg, Split::Eval, c, &dev, k).unwrap());
            let dist = |z: &Vec<f64>| z.iter().zip(&m).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
            let best = (0..10).min_by(|&i, &j| dist(&centroids[i]).total_cmp(&dist(&centroids[j]))).unwrap();
            correct += (best == c as usize) as usize;
        }
    }
    assert!(correct >= 50, "{correct}/100");
}

#[test]
fn identity_profile_is_transparent() {
    let clip = synth_clip(&SceneSpec::preset(2), 1.0, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    let flat = DeviceProfile::new("flat", vec![(0.0, 0.0), (16_000.0, 0.0)], f64::NEG_INFINITY).unwrap();
    let out = apply_device(&clip, &flat, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
    assert_eq!(out.device_id, "flat");
    for (a, b) in out.samples.iter().zip(&clip.samples) {
        assert!((a - b).abs() < 1e-5);
    }
}

/// Energy of DFT bins with frequency in `[lo, hi)`, by direct summation.
fn band_energy(x: &[f32], lo: f64, hi: f64) -> f64 {
    let n = x.len();
    let mut e = 0.0;
    for k in 0..=n / 2 {
        let f = k as f64 * 32_000.0 / n as f64;
        if f < lo || f >= hi {
            continue;
        }
        let (mut re, mut im) = (0.0, 0.0);
        for (i, &v) in x.iter().enumerate() {
            let a = -std::f64::consts::TAU * ((k * i) % n) as f64 / n as f64;
            re += v as f64 * a.cos();
            im += v as f64 * a.sin();
        }
        e += re * re + im * im;
    }
    e
}

#[test]
fn high_shelf_cuts_band_energy() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let noise: Vec<f32> = (0..2048).map(|_| rng.gen_range(-0.5..0.5)).collect();
    let clip = AudioClip::new(noise, TARGET_RATE).unwrap();
    let shelf =
        DeviceProfile::new("shelf", vec![(0.0, 0.0), (4_000.0, 0.0), (4_000.0, -40.0), (16_000.0, -40.0)], f64::NEG_INFINITY)
            .unwrap();
    let out = apply_device(&clip, &shelf, &mut rng).unwrap();
    let before = band_energy(&clip.samples, 4_100.0, 16_001.0);
    let after = band_energy(&out.samples, 4_100.0, 16_001.0);
    let cut = 10.0 * (before / after).log10();
    assert!(cut >= 35.0, "cut {cut:.2} dB");
    let low = 10.0 * (band_energy(&clip.samples, 100.0, 3_900.0) / band_energy(&out.samples, 100.0, 3_900.0)).log10();
    assert!(low.abs() < 0.1, "low band changed by {low:.3} dB");
}

#[test]
fn distinct_profiles_shift_band_means() {
    let fe = Frontend::new(FrontendKind::LogMel).unwrap();
    let clip = synth_clip(&SceneSpec::preset(5), 10.0, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let a = band_means(&fe, &apply_device(&clip, &DeviceProfile::preset("A").unwrap(), &mut rng).unwrap());
    let s1 = band_means(&fe, &apply_device(&clip, &DeviceProfile::preset("S1").unwrap(), &mut rng).unwrap());
    let linf = a.iter().zip(&s1).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    assert!(linf > 1.0, "{linf}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]
    #[test]
    fn device_keeps_length_and_rate(n in 1usize..3000, rate in prop::sample::select(vec![16_000u32, 32_000]), id in 0usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(n as u64);
        let s: Vec<f32> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let clip = AudioClip::new(s, rate).unwrap();
        let p = DeviceProfile::preset(DeviceProfile::PRESET_IDS[id]).unwrap();
        let out = apply_device(&clip, &p, &mut rng).unwrap();
        prop_assert_eq!(out.len(), n);
        prop_assert_eq!(out.sample_rate, rate);
        prop_assert!(out.samples.iter().all(|v| v.is_finite()));
    }
}

#[test]
fn dataset_counts_split_and_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = SynthConfig::new(2, &["A", "B", "C"], &["A", "S3"], 12);
    cfg.n_eval_per_class = 1;
    let rows = make_dataset(dir.path(), &cfg).unwrap();
    let train: Vec<_> = rows.iter().filter(|r| r.split == Split::Train).collect();
    assert_eq!(train.len(), 60);
    assert_eq!(rows.len(), 80);
    assert!(rows.iter().filter(|r| r.device_id == "S3").all(|r| r.split == Split::Eval));
    let text = std::fs::read_to_string(dir.path().join("manifest.csv")).unwrap();
    assert_eq!(parse_manifest(&text).unwrap(), rows);
    let fe = Frontend::new(FrontendKind::LogMel).unwrap();
    for r in rows.iter().step_by(4) {
        let clip = load_wav(dir.path().join(&r.path)).unwrap();
        assert_eq!(clip.len(), 320_000);
        assert_eq!(fe.extract(&clip).unwrap().shape(), [128, 305, 3]);
    }
}

#[test]
fn dataset_regeneration_is_byte_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let mut cfg = SynthConfig::new(1, &["B"], &["S1", "S2"], 5);
    cfg.duration_s = 0.5;
    cfg.n_classes = 3;
    let rows = make_dataset(a.path(), &cfg).unwrap();
    make_dataset(b.path(), &cfg).unwrap();
    let read = |d: &std::path::Path, p: &str| std::fs::read(d.join(p)).unwrap();
    assert_eq!(read(a.path(), "manifest.csv"), read(b.path(), "manifest.csv"));
    for r in &rows {
        assert_eq!(read(a.path(), &r.path), read(b.path(), &r.path), "{}", r.path);
    }
    assert!(matches!(make_dataset(a.path(), &SynthConfig::new(1, &[], &["A"], 0)), Err(SynthError::InvalidConfig(_))));
    assert!(matches!(make_dataset(a.path(), &SynthConfig::new(1, &["Z"], &["A"], 0)), Err(SynthError::InvalidConfig(_))));
}
