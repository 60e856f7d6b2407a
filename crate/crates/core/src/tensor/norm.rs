use super::graph::{GradSink, Op};
use super::{Graph, Real, Result, Tensor, TensorError, Var};

/// Per-channel batch mean and (biased) variance from a training-mode pass.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

impl<T: Real> Graph<T> {
    fn check_affine(&self, x: Var, gamma: Var, beta: Var) -> Result<usize> {
        let c = *self.shape(x).last().unwrap_or(&0);
        if self.shape(gamma) != [c] || self.shape(beta) != [c] {
            return Err(TensorError::ShapeMismatch(format!(
                "batch_norm: x {:?}, gamma {:?}, beta {:?}",
                self.shape(x),
                self.shape(gamma),
                self.shape(beta)
            )));
        }
        Ok(c)
    }

    fn affine_bn(&mut self, x: Var, gamma: Var, beta: Var, mean: &[f64], var: &[f64], eps: f64, train: bool) -> Var {
        let c = mean.len();
        let inv_std: Vec<T> = var.iter().map(|v| T::from_f64_lossy(1.0 / (v + eps).sqrt())).collect();
        let mean_t: Vec<T> = mean.iter().map(|&m| T::from_f64_lossy(m)).collect();
        let (gv, bv) = (self.value(gamma).data(), self.value(beta).data());
        let src = self.value(x).data();
        let mut xhat = vec![T::zero(); src.len()];
        let mut out = vec![T::zero(); src.len()];
        for ((row, hrow), orow) in src.chunks(c).zip(xhat.chunks_mut(c)).zip(out.chunks_mut(c)) {
            for ch in 0..c {
                let h = (row[ch] - mean_t[ch]) * inv_std[ch];
                hrow[ch] = h;
                orow[ch] = gv[ch] * h + bv[ch];
            }
        }
        let out = Tensor::new(self.shape(x).to_vec(), out).expect("same shape");
        self.push(out, Op::BatchNorm { x, gamma, beta, xhat, inv_std, train }, &[x, gamma, beta])
    }

    /// Normalizes each channel (last axis) by statistics over all other axes.
    pub fn batch_norm_train(&mut self, x: Var, gamma: Var, beta: Var, eps: f64) -> Result<(Var, BatchStats)> {
        let c = self.check_affine(x, gamma, beta)?;
        let src = self.value(x).data();
        let rows = src.len() / c.max(1);
        let mut mean = vec![0.0f64; c];
        for row in src.chunks(c) {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v.to_f64_lossy();
            }
        }
        mean.iter_mut().for_each(|m| *m /= rows as f64);
        let mut var = vec![0.0f64; c];
        for row in src.chunks(c) {
            for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
                *s += (v.to_f64_lossy() - m).powi(2);
            }
        }
        var.iter_mut().for_each(|s| *s /= rows as f64);
        let y = self.affine_bn(x, gamma, beta, &mean, &var, eps, true);
        Ok((y, BatchStats { mean, var }))
    }

    /// Normalizes with fixed (running) statistics.
    pub fn batch_norm_eval(&mut self, x: Var, gamma: Var, beta: Var, mean: &[f64], var: &[f64], eps: f64) -> Result<Var> {
        let c = self.check_affine(x, gamma, beta)?;
        if mean.len() != c || var.len() != c {
            return Err(TensorError::ShapeMismatch(format!("batch_norm running stats for {} channels", mean.len())));
        }
        Ok(self.affine_bn(x, gamma, beta, mean, var, eps, false))
    }

    /// `λ·x + IFN(x)`, where IFN standardizes every (sample, frequency) slice
    /// of a `[B, F, T, C]` map across its time and channel cells.
    pub fn residual_norm(&mut self, x: Var, lambda: f64, eps: f64) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if shape.len() != 4 {
            return Err(TensorError::ShapeMismatch(format!("residual_norm expects rank 4, got {shape:?}")));
        }
        let slice = shape[2] * shape[3];
        let lam = T::from_f64_lossy(lambda);
        let src = self.value(x).data();
        let mut xhat = vec![T::zero(); src.len()];
        let mut out = vec![T::zero(); src.len()];
        let mut inv_std = Vec::with_capacity(shape[0] * shape[1]);
        for ((s, h), o) in src.chunks(slice).zip(xhat.chunks_mut(slice)).zip(out.chunks_mut(slice)) {
            let n = s.len() as f64;
            let mean = s.iter().map(|v| v.to_f64_lossy()).sum::<f64>() / n;
            let var = s.iter().map(|v| (v.to_f64_lossy() - mean).powi(2)).sum::<f64>() / n;
            let is = 1.0 / (var + eps).sqrt();
            for ((hv, ov), &v) in h.iter_mut().zip(o.iter_mut()).zip(s) {
                let z = T::from_f64_lossy((v.to_f64_lossy() - mean) * is);
                *hv = z;
                *ov = lam * v + z;
            }
            inv_std.push(T::from_f64_lossy(is));
        }
        let out = Tensor::new(shape, out)?;
        Ok(self.push(out, Op::ResidualNorm { x, lambda: lam, xhat, inv_std }, &[x]))
    }
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn batch_norm_backward<T: Real>(
    g: &Graph<T>,
    x: Var,
    gamma: Var,
    beta: Var,
    xhat: &[T],
    inv_std: &[T],
    train: bool,
    gy: &[T],
    sink: &mut GradSink<T>,
) {
    let c = inv_std.len();
    let rows = gy.len() / c;
    let mut sum_g = vec![0.0f64; c];
    let mut sum_gh = vec![0.0f64; c];
    for (grow, hrow) in gy.chunks(c).zip(xhat.chunks(c)) {
        for ch in 0..c {
            sum_g[ch] += grow[ch].to_f64_lossy();
            sum_gh[ch] += (grow[ch] * hrow[ch]).to_f64_lossy();
        }
    }
    if let Some(gg) = sink.slot(gamma) {
        for (a, s) in gg.iter_mut().zip(&sum_gh) {
            *a = *a + T::from_f64_lossy(*s);
        }
    }
    if let Some(gb) = sink.slot(beta) {
        for (a, s) in gb.iter_mut().zip(&sum_g) {
            *a = *a + T::from_f64_lossy(*s);
        }
    }
    let gv = g.value(gamma).data();
    if let Some(gx) = sink.slot(x) {
        let mean_g: Vec<T> = sum_g.iter().map(|s| T::from_f64_lossy(s / rows as f64)).collect();
        let mean_gh: Vec<T> = sum_gh.iter().map(|s| T::from_f64_lossy(s / rows as f64)).collect();
        for ((xrow, grow), hrow) in gx.chunks_mut(c).zip(gy.chunks(c)).zip(xhat.chunks(c)) {
            for ch in 0..c {
                let scale = gv[ch] * inv_std[ch];
                let d = if train { grow[ch] - mean_g[ch] - hrow[ch] * mean_gh[ch] } else { grow[ch] };
                xrow[ch] = xrow[ch] + scale * d;
            }
        }
    }
}

pub(crate) fn residual_norm_backward<T: Real>(
    g: &Graph<T>,
    x: Var,
    lambda: T,
    xhat: &[T],
    inv_std: &[T],
    gy: &[T],
    sink: &mut GradSink<T>,
) {
    let shape = g.shape(x);
    let slice = shape[2] * shape[3];
    let Some(gx) = sink.slot(x) else { return };
    for (((gxs, gs), hs), &is) in gx.chunks_mut(slice).zip(gy.chunks(slice)).zip(xhat.chunks(slice)).zip(inv_std) {
        let n = gs.len() as f64;
        let mean_g = T::from_f64_lossy(gs.iter().map(|v| v.to_f64_lossy()).sum::<f64>() / n);
        let mean_gh =
            T::from_f64_lossy(gs.iter().zip(hs).map(|(a, b)| (*a * *b).to_f64_lossy()).sum::<f64>() / n);
        for ((a, &d), &h) in gxs.iter_mut().zip(gs).zip(hs) {
            *a = *a + lambda * d + is * (d - mean_g - h * mean_gh);
        }
    }
}
