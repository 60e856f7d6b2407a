use super::{FrontendError, Result, SpectrogramTensor, TARGET_FRAMES};

pub const DELTA_WIDTH: usize = 9;

/// Regression delta along time, `Σ k (x[t+k] − x[t−k]) / (2 Σ k²)`, with
/// replicated edge frames.
pub fn delta(feat: &SpectrogramTensor, width: usize) -> Result<SpectrogramTensor> {
    if width < 3 || width % 2 == 0 {
        return Err(FrontendError::InvalidBandRange(format!("delta width must be odd and >= 3, got {width}")));
    }
    if feat.t < width {
        return Err(FrontendError::TooFewFrames { got: feat.t, need: width });
    }
    let n = (width / 2) as i64;
    let denom: f64 = 2.0 * (1..=n).map(|k| (k * k) as f64).sum::<f64>();
    let last = feat.t as i64 - 1;
    let mut out = SpectrogramTensor::zeros(feat.f, feat.t, feat.c);
    out.frontend = feat.frontend;
    for f in 0..feat.f {
        for c in 0..feat.c {
            for t in 0..feat.t as i64 {
                let at = |i: i64| feat.get(f, i.clamp(0, last) as usize, c) as f64;
                let num: f64 = (1..=n).map(|k| k as f64 * (at(t + k) - at(t - k))).sum();
                out.set(f, t as usize, c, (num / denom) as f32);
            }
        }
    }
    Ok(out)
}

/// Stacks a single-channel spectrogram with its delta and delta-delta,
/// then center-crops or edge-pads time to `target` frames.
pub fn stack_3ch_to(feat: &SpectrogramTensor, target: usize) -> Result<SpectrogramTensor> {
    if feat.c != 1 {
        return Err(FrontendError::ShapeMismatch(format!("stacking needs one channel, got {}", feat.c)));
    }
    let d1 = delta(feat, DELTA_WIDTH)?;
    let d2 = delta(&d1, DELTA_WIDTH)?;
    let chans = [feat, &d1, &d2];
    // Source frame for each output frame: offset by half the surplus (or deficit).
    let src = |t: usize| -> usize {
        if feat.t >= target {
            t + (feat.t - target) / 2
        } else {
            let pad = (target - feat.t) / 2;
            t.saturating_sub(pad).min(feat.t - 1)
        }
    };
    let mut out = SpectrogramTensor::from_fn(feat.f, target, 3, |f, t, c| chans[c].get(f, src(t), 0));
    out.frontend = feat.frontend;
    Ok(out)
}

pub fn stack_3ch(feat: &SpectrogramTensor) -> Result<SpectrogramTensor> {
    stack_3ch_to(feat, TARGET_FRAMES)
}
