use ascnet::audio::*;
use proptest::prelude::*;

fn write_i16(path: &std::path::Path, channels: u16, rate: u32, samples: &[i16]) {
    let spec = hound::WavSpec { channels, sample_rate: rate, bits_per_sample: 16, sample_format: hound::SampleFormat::Int };
    let mut w = hound::WavWriter::create(path, spec).unwrap();
    for &s in samples {
        w.write_sample(s).unwrap();
    }
    w.finalize().unwrap();
}

#[test]
fn full_scale_pcm16() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("a.wav");
    write_i16(&p, 1, 16_000, &[32767; 1600]);
    let clip = load_wav(&p).unwrap();
    assert_eq!(clip.sample_rate, 16_000);
    assert_eq!(clip.len(), 1600);
    assert!(clip.samples.iter().all(|&s| (s - 0.99997).abs() < 1e-5));
}

#[test]
fn zero_payload_and_stereo_average() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("z.wav");
    write_i16(&p, 1, 32_000, &[0; 500]);
    assert!(load_wav(&p).unwrap().samples.iter().all(|&s| s == 0.0));

    let p = dir.path().join("s.wav");
    let spec = hound::WavSpec { channels: 2, sample_rate: 32_000, bits_per_sample: 32, sample_format: hound::SampleFormat::Float };
    let mut w = hound::WavWriter::create(&p, spec).unwrap();
    for _ in 0..100 {
        w.write_sample(0.5f32).unwrap();
        w.write_sample(-0.5f32).unwrap();
    }
    w.finalize().unwrap();
    let clip = load_wav(&p).unwrap();
    assert_eq!(clip.len(), 100);
    assert!(clip.samples.iter().all(|&s| s == 0.0));
}

#[test]
fn ingest_errors() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("junk.wav");
    std::fs::write(&p, b"this is not a riff file at all").unwrap();
    assert!(matches!(load_wav(&p), Err(AudioError::MalformedHeader(_))));

    let p = dir.path().join("empty.wav");
    write_i16(&p, 1, 32_000, &[]);
    assert!(matches!(load_wav(&p), Err(AudioError::EmptyAudio)));

    let p = dir.path().join("24.wav");
    let spec = hound::WavSpec { channels: 1, sample_rate: 32_000, bits_per_sample: 24, sample_format: hound::SampleFormat::Int };
    let mut w = hound::WavWriter::create(&p, spec).unwrap();
    w.write_sample(5i32).unwrap();
    w.finalize().unwrap();
    assert!(matches!(load_wav(&p), Err(AudioError::UnsupportedEncoding(_))));
}

#[test]
fn write_then_read() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("rt.wav");
    let clip = AudioClip::new((0..1000).map(|i| (i as f32 * 0.01).sin() * 0.8).collect(), 32_000).unwrap();
    write_wav(&p, &clip).unwrap();
    let back = load_wav(&p).unwrap();
    for (a, b) in clip.samples.iter().zip(&back.samples) {
        assert!((a - b).abs() <= 1.0 / 32768.0);
    }
}

fn sine(freq: f64, rate: u32, n: usize) -> AudioClip {
    AudioClip::new((0..n).map(|i| (2.0 * std::f64::consts::PI * freq * i as f64 / rate as f64).sin() as f32).collect(), rate)
        .unwrap()
}

#[test]
fn resample_identity_and_lengths() {
    let c = sine(440.0, 32_000, 5000);
    assert_eq!(resample_to_32k(&c), c);
    let c = AudioClip::new(vec![0.1; 480_000], 48_000).unwrap();
    let r = resample_to_32k(&c);
    assert_eq!(r.len(), 320_000);
    assert_eq!(r.sample_rate, 32_000);
}

/// Magnitude of one DFT bin, evaluated directly.
fn dft_mag(x: &[f32], k: usize) -> f64 {
    let n = x.len() as f64;
    let (mut re, mut im) = (0.0, 0.0);
    for (i, &v) in x.iter().enumerate() {
        let a = -2.0 * std::f64::consts::PI * k as f64 * i as f64 / n;
        re += v as f64 * a.cos();
        im += v as f64 * a.sin();
    }
    (re * re + im * im).sqrt()
}

#[test]
fn upsampled_tone_keeps_its_frequency() {
    let r = resample_to_32k(&sine(1000.0, 16_000, 16_000));
    assert_eq!(r.len(), 32_000);
    let seg = &r.samples[8_000..8_000 + 4096];
    let peak = (0..=2048).max_by(|&a, &b| dft_mag(seg, a).total_cmp(&dft_mag(seg, b))).unwrap();
    // 1 kHz at 32 kHz over 4096 points is bin 128.
    assert!((peak as i64 - 128).abs() <= 1, "peak bin {peak}");
}

#[test]
fn segmentation_examples() {
    let c = AudioClip::new((0..320_000).map(|i| i as f32).collect(), 32_000).unwrap();
    let s = segment_10s(&c).unwrap();
    assert_eq!(s.len(), 1);
    assert_eq!(s[0].samples, c.samples);

    let c = AudioClip::new((0..650_000).map(|i| (i % 1000) as f32).collect(), 32_000).unwrap();
    let s = segment_10s(&c).unwrap();
    assert_eq!(s.len(), 2);
    assert_eq!(s[1].samples[..], c.samples[320_000..640_000]);

    let c = AudioClip::new(vec![0.0; 319_999], 32_000).unwrap();
    assert!(matches!(segment_10s(&c), Err(AudioError::ClipTooShort { len: 319_999, need: 320_000 })));
}

fn rms(x: &[f32]) -> f64 {
    (x.iter().map(|&v| (v as f64).powi(2)).sum::<f64>() / x.len() as f64).sqrt()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn round_trip_48k_preserves_length_and_rms(
        n in 16_000usize..40_000,
        tones in prop::collection::vec((50.0f64..7_900.0, 0.05f64..0.5, 0.0f64..std::f64::consts::TAU), 1..4),
    ) {
        let x: Vec<f32> = (0..n)
            .map(|i| {
                let t = i as f64 / 32_000.0;
                tones.iter().map(|(f, a, p)| a * (2.0 * std::f64::consts::PI * f * t + p).sin()).sum::<f64>() as f32
            })
            .collect();
        let c = AudioClip::new(x, 32_000).unwrap();
        let back = resample(&resample(&c, 48_000), 32_000);
        prop_assert_eq!(back.len(), n);
        let (a, b) = (rms(&c.samples), rms(&back.samples));
        prop_assert!((a - b).abs() / a < 0.01, "rms {} vs {}", a, b);
    }

    #[test]
    fn segments_are_disjoint_ordered_slices(n in 320_000usize..1_000_000) {
        let c = AudioClip::new((0..n).map(|i| i as f32).collect(), 32_000).unwrap();
        let segs = segment_10s(&c).unwrap();
        prop_assert_eq!(segs.len(), n / 320_000);
        for (k, s) in segs.iter().enumerate() {
            prop_assert_eq!(s.len(), 320_000);
            prop_assert_eq!(s.samples[0], (k * 320_000) as f32);
            prop_assert_eq!(&s.samples[..], &c.samples[k * 320_000..(k + 1) * 320_000]);
        }
    }
}
