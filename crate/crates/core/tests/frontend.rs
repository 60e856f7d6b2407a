use std::f64::consts::PI;

use ascnet::audio::AudioClip;
use ascnet::frontend::*;
use proptest::prelude::*;

fn tone(freq: f64, n: usize) -> AudioClip {
    AudioClip::new((0..n).map(|i| (2.0 * PI * freq * i as f64 / 32_000.0).sin() as f32).collect(), 32_000).unwrap()
}

fn silence(n: usize) -> AudioClip {
    AudioClip::new(vec![0.0; n], 32_000).unwrap()
}

fn argmax_band(s: &SpectrogramTensor, t: usize) -> usize {
    (0..s.f).max_by(|&a, &b| s.get(a, t, 0).total_cmp(&s.get(b, t, 0))).unwrap()
}

#[test]
fn stft_boundaries() {
    let cfg = StftConfig::default();
    let p = stft_power(&silence(320_000), &cfg).unwrap();
    assert_eq!(p.shape(), [1025, 311, 1]);
    assert!(p.data.iter().all(|&v| v == 0.0));
    assert_eq!(stft_power(&silence(2048), &cfg).unwrap().t, 1);
    assert!(matches!(stft_power(&silence(2000), &cfg), Err(FrontendError::ClipTooShort { .. })));
}

#[test]
fn stft_matches_direct_dft_of_one_frame() {
    let clip = tone(1000.0, 320_000);
    let p = stft_power(&clip, &StftConfig::default()).unwrap();
    for t in 0..p.t {
        assert_eq!(argmax_band(&p, t), 64);
    }
    // Frame 3, direct DFT with a periodic Hann window.
    let frame: Vec<f64> = (0..2048)
        .map(|i| clip.samples[3 * 1024 + i] as f64 * (0.5 - 0.5 * (2.0 * PI * i as f64 / 2048.0).cos()))
        .collect();
    for k in [0usize, 10, 63, 64, 65, 500, 1024] {
        let (mut re, mut im) = (0.0, 0.0);
        for (i, v) in frame.iter().enumerate() {
            let a = -2.0 * PI * (k * i) as f64 / 2048.0;
            re += v * a.cos();
            im += v * a.sin();
        }
        let direct = re * re + im * im;
        let got = p.get(k, 3, 0) as f64;
        assert!((got - direct).abs() <= 1e-5 * direct.max(1e-3), "bin {k}: {got} vs {direct}");
    }
}

#[test]
fn single_mel_band_peaks_at_mel_midpoint() {
    let bank = mel_filterbank(1, 32_000.0, 2048, 0.0, 16_000.0).unwrap();
    let mid_mel = 2595.0 * (1.0f64 + 16_000.0 / 700.0).log10() / 2.0;
    let expected = 700.0 * (10f64.powf(mid_mel / 2595.0) - 1.0);
    assert!((mid_mel - 1787.46).abs() < 0.01);
    assert!((expected - 2719.06).abs() < 0.01);
    assert!((bank.band_centers[0] - expected).abs() < 1e-6);
    let peak = (0..bank.n_bins).max_by(|&a, &b| bank.row(0)[a].total_cmp(&bank.row(0)[b])).unwrap();
    assert!((peak as f64 * 15.625 - expected).abs() <= 15.625);
}

#[test]
fn mel_bank_structure() {
    let bank = mel_filterbank(128, 32_000.0, 2048, 0.0, 16_000.0).unwrap();
    assert!(bank.weights.iter().all(|&w| w >= 0.0));
    assert!(bank.band_centers.windows(2).all(|w| w[0] < w[1]));
    let bin_hz = 32_000.0 / 2048.0;
    for b in 0..128 {
        assert!(bank.row(b).iter().any(|&w| w > 0.0), "row {b} empty");
        // Upper edge of band b is the center of band b+1: no weight at or beyond it.
        if b + 1 < 128 {
            let upper = bank.band_centers[b + 1];
            for k in 0..bank.n_bins {
                if k as f64 * bin_hz >= upper {
                    assert_eq!(bank.row(b)[k], 0.0);
                }
            }
        }
    }
    for k in 0..bank.n_bins {
        let f = k as f64 * bin_hz;
        if f > bank.band_centers[0] && f < bank.band_centers[127] {
            let total: f64 = (0..128).map(|b| bank.row(b)[k]).sum();
            assert!(total > 0.0, "bin {k} uncovered");
        }
    }
}

fn power_tensor(frames: &[Vec<f64>]) -> SpectrogramTensor {
    SpectrogramTensor::from_fn(frames[0].len(), frames.len(), 1, |f, t, _| frames[t][f] as f32)
}

#[test]
fn log_mel_floor_doubling_and_areas() {
    let bank = mel_filterbank(128, 32_000.0, 2048, 0.0, 16_000.0).unwrap();
    let zero = power_tensor(&vec![vec![0.0; 1025]; 4]);
    assert!(log_mel(&zero, &bank).unwrap().data.iter().all(|&v| v == -100.0));

    let mut rng_state = 7u64;
    let mut next = || {
        rng_state = rng_state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((rng_state >> 11) as f64 / (1u64 << 53) as f64) + 0.5
    };
    let frames: Vec<Vec<f64>> = (0..3).map(|_| (0..1025).map(|_| next()).collect()).collect();
    let doubled: Vec<Vec<f64>> = frames.iter().map(|f| f.iter().map(|v| 2.0 * v).collect()).collect();
    let a = log_mel(&power_tensor(&frames), &bank).unwrap();
    let b = log_mel(&power_tensor(&doubled), &bank).unwrap();
    for (x, y) in a.data.iter().zip(&b.data) {
        assert!((y - x - 3.0103).abs() < 1e-3);
    }

    // Flat power: each band equals the triangle's weight sum.
    let flat = log_mel(&power_tensor(&vec![vec![1.0; 1025]]), &bank).unwrap();
    for band in 0..128 {
        let area: f64 = bank.row(band).iter().sum();
        assert!((flat.get(band, 0, 0) as f64 - 10.0 * area.log10()).abs() < 1e-4);
    }
    assert!(log_mel(&power_tensor(&vec![vec![1.0; 1000]]), &bank).is_err());
}

#[test]
fn filterbank_apply_is_matrix_product() {
    let bank = mel_filterbank(128, 32_000.0, 2048, 0.0, 16_000.0).unwrap();
    let frame: Vec<f64> = (0..1025).map(|k| ((k * 37 % 101) as f64) / 17.0).collect();
    let got = bank.apply(&frame);
    for b in 0..128 {
        let mut direct = 0.0;
        for k in 0..1025 {
            direct += bank.weights[b * 1025 + k] * frame[k];
        }
        assert!((got[b] - direct).abs() <= 1e-6 * direct.abs().max(1e-12));
    }
}

#[test]
fn cqt_geometry_and_floor() {
    let f = cqt_frequencies(128, 24, 32.7);
    for k in 0..104 {
        assert!((f[k + 24] / f[k] - 2.0).abs() < 1e-12);
    }
    let s = cqt(&silence(320_000), 128, 24, 32.7).unwrap();
    assert_eq!(s.shape(), [128, 311, 1]);
    assert!(s.data.iter().all(|&v| v == -100.0));
    assert!(matches!(cqt(&silence(320_000), 128, 12, 32.7), Err(FrontendError::NyquistExceeded { .. })));
}

#[test]
fn cqt_tone_peaks_in_its_bin_and_matches_direct_kernels() {
    let freqs = cqt_frequencies(128, 24, 32.7);
    let clip = tone(freqs[10], 320_000);
    let s = cqt(&clip, 128, 24, 32.7).unwrap();
    let q = 1.0 / (2f64.powf(1.0 / 24.0) - 1.0);
    for t in [40usize, 150, 270] {
        assert_eq!(argmax_band(&s, t), 10, "frame {t}");
        // Analytic kernel inner product around the frame center.
        let center = t * 1024 + 1024;
        let direct: Vec<f64> = freqs
            .iter()
            .take(24)
            .map(|&fk| {
                let len = (q * 32_000.0 / fk).ceil() as usize;
                let start = center - len / 2;
                let (mut re, mut im) = (0.0, 0.0);
                for i in 0..len {
                    let w = 0.5 - 0.5 * (2.0 * PI * i as f64 / len as f64).cos();
                    let n = start + i;
                    let a = -2.0 * PI * fk * (n as f64 - center as f64) / 32_000.0;
                    let x = clip.samples[n] as f64 * w / len as f64;
                    re += x * a.cos();
                    im += x * a.sin();
                }
                10.0 * (re * re + im * im).max(1e-10).log10()
            })
            .collect();
        let best = (0..24).max_by(|&a, &b| direct[a].total_cmp(&direct[b])).unwrap();
        assert_eq!(best, 10);
        for k in 9..12 {
            assert!((s.get(k, t, 0) as f64 - direct[k]).abs() < 0.05, "bin {k}: {} vs {}", s.get(k, t, 0), direct[k]);
        }
        // Away from the peak, sparse-kernel truncation error stays far below it.
        let peak = 10f64.powf(direct[10] / 10.0);
        for k in 0..24 {
            let got = 10f64.powf(s.get(k, t, 0) as f64 / 10.0);
            let want = 10f64.powf(direct[k] / 10.0);
            assert!((got - want).abs() < 1e-3 * peak, "bin {k}");
        }
    }
}

#[test]
fn gammatone_centers_floor_and_tone() {
    let c = erb_centers(128, 50.0, 16_000.0);
    assert!(c.windows(2).all(|w| w[0] < w[1]));
    assert!((c[0] - 50.0).abs() < 1e-6 && (c[127] - 16_000.0).abs() < 1e-6);
    let s = gammatone(&silence(320_000), 128).unwrap();
    assert_eq!(s.shape(), [128, 312, 1]);
    assert!(s.data.iter().all(|&v| v == -100.0));

    let bank = GammatoneBank::new(128, 32_000.0, 50.0, 16_000.0);
    // Oracle: magnitude response of every band at the tone frequency.
    let gains: Vec<f64> = (0..128).map(|b| bank.response(b, c[64]).norm()).collect();
    let oracle = (0..128).max_by(|&a, &b| gains[a].total_cmp(&gains[b])).unwrap();
    assert_eq!(oracle, 64);
    let s = gammatone(&tone(c[64], 64_000), 128).unwrap();
    for t in 2..s.t {
        assert_eq!(argmax_band(&s, t), 64, "frame {t}");
    }
}

#[test]
fn delta_examples() {
    let constant = SpectrogramTensor::from_fn(3, 20, 1, |_, _, _| 4.5);
    assert!(delta(&constant, 9).unwrap().data.iter().all(|&v| v == 0.0));
    let ramp = SpectrogramTensor::from_fn(2, 30, 1, |_, t, _| t as f32);
    let d = delta(&ramp, 9).unwrap();
    for t in 4..26 {
        assert!((d.get(1, t, 0) - 1.0).abs() < 1e-6);
    }
    let quad = SpectrogramTensor::from_fn(1, 40, 1, |_, t, _| (t * t) as f32);
    let dd = delta(&delta(&quad, 9).unwrap(), 9).unwrap();
    for t in 8..32 {
        assert!((dd.get(0, t, 0) - 2.0).abs() < 1e-4, "t={t}: {}", dd.get(0, t, 0));
    }
    assert!(matches!(delta(&SpectrogramTensor::zeros(2, 8, 1), 9), Err(FrontendError::TooFewFrames { got: 8, need: 9 })));
}

#[test]
fn stacking_examples() {
    let x = SpectrogramTensor::from_fn(128, 305, 1, |f, t, _| ((f * 31 + t * 7) % 13) as f32);
    let s = stack_3ch(&x).unwrap();
    assert_eq!(s.shape(), [128, 305, 3]);
    assert_eq!(s.channel(0), x.data);

    let c = SpectrogramTensor::from_fn(128, 305, 1, |_, _, _| -3.0);
    let s = stack_3ch(&c).unwrap();
    assert!(s.channel(1).iter().chain(s.channel(2).iter()).all(|&v| v == 0.0));

    let long = SpectrogramTensor::from_fn(128, 311, 1, |f, t, _| (f * 1000 + t) as f32);
    let s = stack_3ch(&long).unwrap();
    assert_eq!(s.shape(), [128, 305, 3]);
    assert_eq!(s.get(5, 0, 0), long.get(5, 3, 0));
    assert_eq!(s.get(5, 304, 0), long.get(5, 307, 0));

    let short = SpectrogramTensor::from_fn(2, 301, 1, |_, t, _| t as f32);
    let s = stack_3ch(&short).unwrap();
    assert_eq!(s.t, 305);
    assert_eq!(s.get(0, 0, 0), 0.0);
    assert_eq!(s.get(0, 2, 0), 0.0);
    assert_eq!(s.get(0, 3, 0), 1.0);
    assert_eq!(s.get(0, 304, 0), 300.0);
}

#[test]
fn every_frontend_yields_128_by_305_by_3() {
    let clip = AudioClip::new((0..320_000).map(|i| ((i as f32) * 0.37).sin() * 0.3).collect(), 32_000).unwrap();
    for k in FrontendKind::ALL {
        let s = Frontend::new(k).unwrap().extract(&clip).unwrap();
        assert_eq!(s.shape(), [128, 305, 3], "{k}");
        assert!(s.all_finite());
        assert_eq!(s.frontend, Some(k));
    }
    let wrong_rate = AudioClip::new(vec![0.0; 320_000], 16_000).unwrap();
    assert!(Frontend::new(FrontendKind::LogMel).unwrap().extract(&wrong_rate).is_err());
}

#[test]
fn cache_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("f.ascf");
    let header = CacheHeader { frontend: FrontendKind::Gammatone, f: 4, t: 5, c: 3 };
    let recs: Vec<CacheRecord> = (0..3)
        .map(|i| CacheRecord {
            label: i as u8,
            device: ["A", "S1", "B"][i].to_string(),
            features: SpectrogramTensor {
                frontend: Some(FrontendKind::Gammatone),
                ..SpectrogramTensor::from_fn(4, 5, 3, |f, t, c| (i * 100 + f * 15 + t * 3 + c) as f32 - 0.5)
            },
        })
        .collect();
    write_cache(&path, header, &recs).unwrap();
    let (h, back) = read_cache(&path).unwrap();
    assert_eq!(h, header);
    assert_eq!(back, recs);
    std::fs::write(&path, b"NOPE").unwrap();
    assert!(matches!(read_cache(&path), Err(CacheError::BadMagic)));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn log_compression_is_monotone(a in 0.0f64..1e6, b in 0.0f64..1e6) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(log_compress(lo) <= log_compress(hi));
    }

    #[test]
    fn delta_is_linear(
        xs in prop::collection::vec(-50.0f32..50.0, 2 * 16),
        ys in prop::collection::vec(-50.0f32..50.0, 2 * 16),
        a in -3.0f32..3.0,
        b in -3.0f32..3.0,
    ) {
        let x = SpectrogramTensor { data: xs, f: 2, t: 16, c: 1, frontend: None };
        let y = SpectrogramTensor { data: ys, f: 2, t: 16, c: 1, frontend: None };
        let combo = SpectrogramTensor {
            data: x.data.iter().zip(&y.data).map(|(u, v)| a * u + b * v).collect(),
            ..x.clone()
        };
        let (dx, dy, dc) = (delta(&x, 9).unwrap(), delta(&y, 9).unwrap(), delta(&combo, 9).unwrap());
        for i in 0..dc.data.len() {
            let expect = a * dx.data[i] + b * dy.data[i];
            prop_assert!((dc.data[i] - expect).abs() <= 1e-4 * (1.0 + expect.abs()));
        }
    }
}
