use ascnet_web::{augment_preview, prod_fuse, spectrogram, synth_scene};

#[test]
fn scene_to_spectrogram() {
    let audio = synth_scene(3, "S2", 1.0, 9).unwrap();
    assert_eq!(audio.len(), 32_000);
    assert_eq!(audio, synth_scene(3, "S2", 1.0, 9).unwrap());
    let m = spectrogram(audio, "logmel").unwrap();
    assert_eq!(m.rows(), 128);
    assert!(m.cols() > 20);
    assert_eq!(m.data().len(), m.rows() * m.cols());
    assert!(m.data().iter().all(|v| v.is_finite()));
}

#[test]
fn augment_preview_crops_and_masks() {
    let (rows, cols) = (16, 40);
    let data: Vec<f32> = (0..rows * cols).map(|i| 1.0 + i as f32).collect();
    let m = augment_preview(data.clone(), rows, cols, 24, 4, false, 3).unwrap();
    assert_eq!((m.rows(), m.cols()), (rows, 24));
    let out = m.data();
    assert!(out.iter().filter(|&&v| v == 0.0).count() >= 4);
    let mixed = augment_preview(data, rows, cols, 24, 0, true, 3).unwrap();
    assert_eq!(mixed.data().len(), rows * 24);
}

#[test]
fn prod_fuse_returns_scores_and_label() {
    let out = prod_fuse(vec![0.2, 0.1, 0.6, 0.1, 0.2, 0.4, 0.05, 0.35], 2, 4).unwrap();
    assert_eq!(out.len(), 5);
    assert_eq!(out[4], 0.0);
    let single = prod_fuse(vec![0.1, 0.7, 0.2], 1, 3).unwrap();
    assert_eq!(single, vec![0.1, 0.7, 0.2, 1.0]);
}
