use rand::Rng;

use super::graph::{GradSink, Op};
use super::{gemm, split_axis, Graph, Mode, Real, Result, Tensor, TensorError, Var};

fn same_shape<T: Real>(g: &Graph<T>, a: Var, b: Var, what: &str) -> Result<()> {
    if g.shape(a) != g.shape(b) {
        return Err(TensorError::ShapeMismatch(format!(
            "{what}: {:?} vs {:?}",
            g.shape(a),
            g.shape(b)
        )));
    }
    Ok(())
}

fn map<T: Real>(g: &Graph<T>, x: Var, f: impl Fn(T) -> T) -> Tensor<T> {
    let v = g.value(x);
    Tensor::new(v.shape().to_vec(), v.data().iter().map(|&a| f(a)).collect()).expect("same shape")
}

impl<T: Real> Graph<T> {
    pub fn relu(&mut self, x: Var) -> Var {
        let out = map(self, x, |a| a.max(T::zero()));
        self.push(out, Op::Relu { x }, &[x])
    }

    pub fn neg(&mut self, x: Var) -> Var {
        let out = map(self, x, |a| -a);
        self.push(out, Op::Neg { x }, &[x])
    }

    pub fn abs(&mut self, x: Var) -> Var {
        let out = map(self, x, |a| a.abs());
        self.push(out, Op::Abs { x }, &[x])
    }

    pub fn scale(&mut self, x: Var, factor: T) -> Var {
        let out = map(self, x, |a| a * factor);
        self.push(out, Op::Scale { x, factor }, &[x])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape(self, a, b, "add")?;
        let data = self.value(a).data().iter().zip(self.value(b).data()).map(|(&p, &q)| p + q).collect();
        let out = Tensor::new(self.shape(a).to_vec(), data)?;
        Ok(self.push(out, Op::Add { a, b }, &[a, b]))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape(self, a, b, "mul")?;
        let data = self.value(a).data().iter().zip(self.value(b).data()).map(|(&p, &q)| p * q).collect();
        let out = Tensor::new(self.shape(a).to_vec(), data)?;
        Ok(self.push(out, Op::Mul { a, b }, &[a, b]))
    }

    /// Sum of all elements as a `[1]` tensor.
    pub fn sum(&mut self, x: Var) -> Var {
        let s: f64 = self.value(x).data().iter().map(|v| v.to_f64_lossy()).sum();
        self.push(Tensor::scalar(T::from_f64_lossy(s)), Op::Sum { x }, &[x])
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let out = self.value(x).clone().reshape(shape)?;
        Ok(self.push(out, Op::Reshape { x }, &[x]))
    }

    /// Numerically stabilized softmax along `axis`.
    pub fn softmax(&mut self, x: Var, axis: usize) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if axis >= shape.len() {
            return Err(TensorError::ShapeMismatch(format!("softmax axis {axis} on {shape:?}")));
        }
        let (outer, len, inner) = split_axis(&shape, axis);
        let src = self.value(x).data();
        let mut out = vec![T::zero(); src.len()];
        for o in 0..outer {
            for i in 0..inner {
                let at = |k: usize| o * len * inner + k * inner + i;
                let m = (0..len).map(|k| src[at(k)]).fold(T::neg_infinity(), T::max);
                let mut total = 0.0f64;
                for k in 0..len {
                    let e = (src[at(k)] - m).exp();
                    out[at(k)] = e;
                    total += e.to_f64_lossy();
                }
                let inv = T::from_f64_lossy(1.0 / total);
                for k in 0..len {
                    out[at(k)] = out[at(k)] * inv;
                }
            }
        }
        let out = Tensor::new(shape, out)?;
        Ok(self.push(out, Op::Softmax { x, axis }, &[x]))
    }

    /// Inverted dropout: survivors are scaled by `1/(1-p)` so `Eval` is the identity.
    pub fn dropout<R: Rng + ?Sized>(&mut self, x: Var, p: f64, mode: Mode, rng: &mut R) -> Var {
        assert!((0.0..1.0).contains(&p), "dropout ratio must lie in [0, 1)");
        if mode == Mode::Eval || p == 0.0 {
            return x;
        }
        let keep = T::from_f64_lossy(1.0 / (1.0 - p));
        let mask: Vec<T> = (0..self.value(x).numel())
            .map(|_| if rng.gen::<f64>() < p { T::zero() } else { keep })
            .collect();
        let data = self.value(x).data().iter().zip(&mask).map(|(&a, &m)| a * m).collect();
        let out = Tensor::new(self.shape(x).to_vec(), data).expect("same shape");
        self.push(out, Op::Dropout { x, mask }, &[x])
    }

    /// Affine map `x[B,D]·w[D,U] + b[U]`.
    pub fn dense(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let (xs, ws) = (self.shape(x), self.shape(w));
        if xs.len() != 2 || ws.len() != 2 || xs[1] != ws[0] {
            return Err(TensorError::ShapeMismatch(format!("dense: x {xs:?}, w {ws:?}")));
        }
        let (batch, d, u) = (xs[0], xs[1], ws[1]);
        if let Some(b) = b {
            if self.shape(b) != [u] {
                return Err(TensorError::ShapeMismatch(format!("dense bias {:?}", self.shape(b))));
            }
        }
        let mut out = vec![T::zero(); batch * u];
        if let Some(b) = b {
            for row in out.chunks_mut(u) {
                row.copy_from_slice(self.value(b).data());
            }
        }
        gemm(false, false, batch, u, d, T::one(), self.value(x).data(), self.value(w).data(), T::one(), &mut out);
        let out = Tensor::new(vec![batch, u], out)?;
        let inputs: Vec<Var> = [Some(x), Some(w), b].into_iter().flatten().collect();
        Ok(self.push(out, Op::Dense { x, w, b }, &inputs))
    }

    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        let first = self.shape(parts[0]).to_vec();
        if axis >= first.len() {
            return Err(TensorError::ShapeMismatch(format!("concat axis {axis} on {first:?}")));
        }
        for &p in parts {
            let s = self.shape(p);
            let ok = s.len() == first.len()
                && s.iter().zip(&first).enumerate().all(|(i, (a, b))| i == axis || a == b);
            if !ok {
                return Err(TensorError::ShapeMismatch(format!("concat {first:?} with {s:?}")));
            }
        }
        let total: usize = parts.iter().map(|&p| self.shape(p)[axis]).sum();
        let mut shape = first.clone();
        shape[axis] = total;
        let (outer, _, inner) = split_axis(&shape, axis);
        let mut out = Vec::with_capacity(shape.iter().product());
        for o in 0..outer {
            for &p in parts {
                let len = self.shape(p)[axis] * inner;
                out.extend_from_slice(&self.value(p).data()[o * len..(o + 1) * len]);
            }
        }
        let out = Tensor::new(shape, out)?;
        Ok(self.push(out, Op::Concat { parts: parts.to_vec(), axis }, parts))
    }

    /// `Σ y·log(y/ŷ)` over all entries, with `0·log(0/·) = 0`. Predictions
    /// must be positive wherever the target is, and never negative or NaN.
    pub fn kl_div(&mut self, target: Tensor<T>, pred: Var) -> Result<Var> {
        if target.shape() != self.shape(pred) {
            return Err(TensorError::ShapeMismatch(format!(
                "kl target {:?} vs prediction {:?}",
                target.shape(),
                self.shape(pred)
            )));
        }
        let mut total = 0.0f64;
        for (index, (&y, &p)) in target.data().iter().zip(self.value(pred).data()).enumerate() {
            let p = p.to_f64_lossy();
            let y = y.to_f64_lossy();
            if !(p >= 0.0) || (y > 0.0 && p == 0.0) {
                return Err(TensorError::NonPositivePrediction { index, value: p });
            }
            if y > 0.0 {
                total += y * (y / p).ln();
            }
        }
        let target = target.into_data();
        Ok(self.push(Tensor::scalar(T::from_f64_lossy(total)), Op::KlDiv { target, pred }, &[pred]))
    }
}

pub(crate) fn scale_backward<T: Real>(x: Var, factor: T, gy: &[T], sink: &mut GradSink<T>) {
    if let Some(gx) = sink.slot(x) {
        for (a, &g) in gx.iter_mut().zip(gy) {
            *a = *a + g * factor;
        }
    }
}

pub(crate) fn relu_backward<T: Real>(g: &Graph<T>, x: Var, gy: &[T], sink: &mut GradSink<T>) {
    let xv = g.value(x).data();
    if let Some(gx) = sink.slot(x) {
        for ((a, &v), &d) in gx.iter_mut().zip(xv).zip(gy) {
            if v > T::zero() {
                *a = *a + d;
            }
        }
    }
}

pub(crate) fn abs_backward<T: Real>(g: &Graph<T>, x: Var, gy: &[T], sink: &mut GradSink<T>) {
    let xv = g.value(x).data();
    if let Some(gx) = sink.slot(x) {
        for ((a, &v), &d) in gx.iter_mut().zip(xv).zip(gy) {
            *a = *a + d * v.signum();
        }
    }
}

pub(crate) fn mul_backward<T: Real>(g: &Graph<T>, a: Var, b: Var, gy: &[T], sink: &mut GradSink<T>) {
    let (av, bv) = (g.value(a).data(), g.value(b).data());
    if let Some(ga) = sink.slot(a) {
        for ((s, &o), &d) in ga.iter_mut().zip(bv).zip(gy) {
            *s = *s + d * o;
        }
    }
    if let Some(gb) = sink.slot(b) {
        for ((s, &o), &d) in gb.iter_mut().zip(av).zip(gy) {
            *s = *s + d * o;
        }
    }
}

pub(crate) fn sum_backward<T: Real>(x: Var, gy: T, sink: &mut GradSink<T>) {
    if let Some(gx) = sink.slot(x) {
        gx.iter_mut().for_each(|a| *a = *a + gy);
    }
}

pub(crate) fn softmax_backward<T: Real>(y: &Tensor<T>, x: Var, axis: usize, gy: &[T], sink: &mut GradSink<T>) {
    let (outer, len, inner) = split_axis(y.shape(), axis);
    let yv = y.data();
    if let Some(gx) = sink.slot(x) {
        for o in 0..outer {
            for i in 0..inner {
                let at = |k: usize| o * len * inner + k * inner + i;
                let dot: f64 = (0..len).map(|k| (gy[at(k)] * yv[at(k)]).to_f64_lossy()).sum();
                let dot = T::from_f64_lossy(dot);
                for k in 0..len {
                    gx[at(k)] = gx[at(k)] + yv[at(k)] * (gy[at(k)] - dot);
                }
            }
        }
    }
}

pub(crate) fn dropout_backward<T: Real>(x: Var, mask: &[T], gy: &[T], sink: &mut GradSink<T>) {
    if let Some(gx) = sink.slot(x) {
        for ((a, &m), &d) in gx.iter_mut().zip(mask).zip(gy) {
            *a = *a + d * m;
        }
    }
}

pub(crate) fn dense_backward<T: Real>(
    g: &Graph<T>,
    x: Var,
    w: Var,
    b: Option<Var>,
    gy: &[T],
    sink: &mut GradSink<T>,
) {
    let xs = g.shape(x);
    let (batch, d) = (xs[0], xs[1]);
    let u = g.shape(w)[1];
    if let Some(gx) = sink.slot(x) {
        gemm(false, true, batch, d, u, T::one(), gy, g.value(w).data(), T::one(), gx);
    }
    if let Some(gw) = sink.slot(w) {
        gemm(true, false, d, u, batch, T::one(), g.value(x).data(), gy, T::one(), gw);
    }
    if let Some(b) = b {
        if let Some(gb) = sink.slot(b) {
            for row in gy.chunks(u) {
                for (a, &v) in gb.iter_mut().zip(row) {
                    *a = *a + v;
                }
            }
        }
    }
}

pub(crate) fn concat_backward<T: Real>(
    g: &Graph<T>,
    parts: &[Var],
    axis: usize,
    gy: &[T],
    sink: &mut GradSink<T>,
) {
    let total: usize = parts.iter().map(|&p| g.shape(p)[axis]).sum();
    let (outer, _, inner) = split_axis(g.shape(parts[0]), axis);
    let row = total * inner;
    let mut offset = 0;
    for &p in parts {
        let len = g.shape(p)[axis] * inner;
        if let Some(gp) = sink.slot(p) {
            for o in 0..outer {
                let src = &gy[o * row + offset..o * row + offset + len];
                for (a, &v) in gp[o * len..(o + 1) * len].iter_mut().zip(src) {
                    *a = *a + v;
                }
            }
        }
        offset += len;
    }
}

pub(crate) fn kl_backward<T: Real>(g: &Graph<T>, target: &[T], pred: Var, gy: T, sink: &mut GradSink<T>) {
    let pv = g.value(pred).data();
    if let Some(gp) = sink.slot(pred) {
        for ((a, &y), &p) in gp.iter_mut().zip(target).zip(pv) {
            if y > T::zero() {
                *a = *a - gy * y / p;
            }
        }
    }
}
