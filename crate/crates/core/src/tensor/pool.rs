use super::conv::{axis_out, Padding};
use super::graph::{GradSink, Op};
use super::{split_axis, Graph, Real, Result, Tensor, TensorError, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct PoolGeom {
    batch: usize,
    in_f: usize,
    in_t: usize,
    c: usize,
    kf: usize,
    kt: usize,
    sf: usize,
    st: usize,
    pad_f: usize,
    pad_t: usize,
    out_f: usize,
    out_t: usize,
}

impl PoolGeom {
    fn new(input: &[usize], kernel: (usize, usize), stride: (usize, usize), padding: Padding) -> Result<Self> {
        let bad = || TensorError::ShapeMismatch(format!("pool: input {input:?}, kernel {kernel:?}, stride {stride:?}"));
        if input.len() != 4 || kernel.0 == 0 || kernel.1 == 0 || stride.0 == 0 || stride.1 == 0 {
            return Err(bad());
        }
        let (out_f, pad_f) = axis_out(input[1], kernel.0, stride.0, padding).ok_or_else(bad)?;
        let (out_t, pad_t) = axis_out(input[2], kernel.1, stride.1, padding).ok_or_else(bad)?;
        Ok(Self {
            batch: input[0],
            in_f: input[1],
            in_t: input[2],
            c: input[3],
            kf: kernel.0,
            kt: kernel.1,
            sf: stride.0,
            st: stride.1,
            pad_f,
            pad_t,
            out_f,
            out_t,
        })
    }

    fn output_shape(&self) -> Vec<usize> {
        vec![self.batch, self.out_f, self.out_t, self.c]
    }

    /// Clipped input window `[f0, f1) × [t0, t1)` for one output position.
    fn window(&self, of: usize, ot: usize) -> (usize, usize, usize, usize) {
        let f0 = (of * self.sf) as isize - self.pad_f as isize;
        let t0 = (ot * self.st) as isize - self.pad_t as isize;
        let f1 = (f0 + self.kf as isize).min(self.in_f as isize) as usize;
        let t1 = (t0 + self.kt as isize).min(self.in_t as isize) as usize;
        (f0.max(0) as usize, f1, t0.max(0) as usize, t1)
    }
}

/// Reduction applied along one axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reduce {
    Mean,
    Max,
}

/// Whole-axis pooling over a `[B, F, T, C]` map; the remaining two axes
/// are flattened.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GlobalPool {
    /// Mean over channels, yielding `F·T` values.
    AvgChannel,
    /// Max over time, yielding `F·C` values.
    MaxTime,
    /// Mean over frequency, yielding `T·C` values.
    AvgFreq,
}

impl<T: Real> Graph<T> {
    pub fn max_pool(&mut self, x: Var, kernel: (usize, usize), stride: (usize, usize)) -> Result<Var> {
        let geom = PoolGeom::new(self.shape(x), kernel, stride, Padding::Valid)?;
        let src = self.value(x).data();
        let c = geom.c;
        let mut out = vec![T::neg_infinity(); geom.batch * geom.out_f * geom.out_t * c];
        let mut argmax = vec![0u32; out.len()];
        for b in 0..geom.batch {
            for of in 0..geom.out_f {
                for ot in 0..geom.out_t {
                    let o = ((b * geom.out_f + of) * geom.out_t + ot) * c;
                    let (f0, f1, t0, t1) = geom.window(of, ot);
                    for f in f0..f1 {
                        for t in t0..t1 {
                            let i = ((b * geom.in_f + f) * geom.in_t + t) * c;
                            for ch in 0..c {
                                if src[i + ch] > out[o + ch] {
                                    out[o + ch] = src[i + ch];
                                    argmax[o + ch] = (i + ch) as u32;
                                }
                            }
                        }
                    }
                }
            }
        }
        let out = Tensor::new(geom.output_shape(), out)?;
        Ok(self.push(out, Op::MaxPool { x, argmax }, &[x]))
    }

    /// Window mean divided by the number of in-bounds cells.
    pub fn avg_pool(&mut self, x: Var, kernel: (usize, usize), stride: (usize, usize), padding: Padding) -> Result<Var> {
        let geom = PoolGeom::new(self.shape(x), kernel, stride, padding)?;
        let src = self.value(x).data();
        let c = geom.c;
        let mut out = vec![T::zero(); geom.batch * geom.out_f * geom.out_t * c];
        for b in 0..geom.batch {
            for of in 0..geom.out_f {
                for ot in 0..geom.out_t {
                    let o = ((b * geom.out_f + of) * geom.out_t + ot) * c;
                    let (f0, f1, t0, t1) = geom.window(of, ot);
                    let dst = &mut out[o..o + c];
                    for f in f0..f1 {
                        for t in t0..t1 {
                            let i = ((b * geom.in_f + f) * geom.in_t + t) * c;
                            for (a, &v) in dst.iter_mut().zip(&src[i..i + c]) {
                                *a = *a + v;
                            }
                        }
                    }
                    let inv = T::one() / T::from_usize((f1 - f0) * (t1 - t0)).unwrap();
                    dst.iter_mut().for_each(|a| *a = *a * inv);
                }
            }
        }
        let out = Tensor::new(geom.output_shape(), out)?;
        Ok(self.push(out, Op::AvgPool { x, geom }, &[x]))
    }

    /// Reduces `axis` away entirely (the output rank drops by one).
    pub fn reduce(&mut self, x: Var, axis: usize, kind: Reduce) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if axis >= shape.len() || shape.len() < 2 {
            return Err(TensorError::ShapeMismatch(format!("reduce axis {axis} on {shape:?}")));
        }
        let (outer, len, inner) = split_axis(&shape, axis);
        let src = self.value(x).data();
        let mut out = vec![T::zero(); outer * inner];
        let mut argmax = Vec::new();
        match kind {
            Reduce::Mean => {
                for o in 0..outer {
                    for i in 0..inner {
                        let s: f64 = (0..len).map(|k| src[(o * len + k) * inner + i].to_f64_lossy()).sum();
                        out[o * inner + i] = T::from_f64_lossy(s / len as f64);
                    }
                }
            }
            Reduce::Max => {
                argmax = vec![0u32; outer * inner];
                for o in 0..outer {
                    for i in 0..inner {
                        let mut best = (T::neg_infinity(), 0usize);
                        for k in 0..len {
                            let idx = (o * len + k) * inner + i;
                            if src[idx] > best.0 {
                                best = (src[idx], idx);
                            }
                        }
                        out[o * inner + i] = best.0;
                        argmax[o * inner + i] = best.1 as u32;
                    }
                }
            }
        }
        let mut out_shape = shape;
        out_shape.remove(axis);
        let out = Tensor::new(out_shape, out)?;
        Ok(self.push(out, Op::Reduce { x, axis, kind, argmax }, &[x]))
    }

    /// Global pooling of a `[B, F, T, C]` map into `[B, ·]` feature rows.
    pub fn global_pool(&mut self, x: Var, kind: GlobalPool) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if shape.len() != 4 {
            return Err(TensorError::ShapeMismatch(format!("global_pool expects rank 4, got {shape:?}")));
        }
        let (axis, red) = match kind {
            GlobalPool::AvgChannel => (3, Reduce::Mean),
            GlobalPool::MaxTime => (2, Reduce::Max),
            GlobalPool::AvgFreq => (1, Reduce::Mean),
        };
        let r = self.reduce(x, axis, red)?;
        let rest: usize = self.shape(r)[1..].iter().product();
        self.reshape(r, &[shape[0], rest])
    }
}

pub(crate) fn scatter_argmax<T: Real>(x: Var, argmax: &[u32], gy: &[T], sink: &mut GradSink<T>) {
    if let Some(gx) = sink.slot(x) {
        for (&i, &g) in argmax.iter().zip(gy) {
            gx[i as usize] = gx[i as usize] + g;
        }
    }
}

pub(crate) fn avg_pool_backward<T: Real>(x: Var, geom: &PoolGeom, gy: &[T], sink: &mut GradSink<T>) {
    let Some(gx) = sink.slot(x) else { return };
    let c = geom.c;
    for b in 0..geom.batch {
        for of in 0..geom.out_f {
            for ot in 0..geom.out_t {
                let o = ((b * geom.out_f + of) * geom.out_t + ot) * c;
                let (f0, f1, t0, t1) = geom.window(of, ot);
                let inv = T::one() / T::from_usize((f1 - f0) * (t1 - t0)).unwrap();
                let g = &gy[o..o + c];
                for f in f0..f1 {
                    for t in t0..t1 {
                        let i = ((b * geom.in_f + f) * geom.in_t + t) * c;
                        for (a, &v) in gx[i..i + c].iter_mut().zip(g) {
                            *a = *a + v * inv;
                        }
                    }
                }
            }
        }
    }
}

pub(crate) fn reduce_backward<T: Real>(
    g: &Graph<T>,
    x: Var,
    axis: usize,
    kind: Reduce,
    argmax: &[u32],
    gy: &[T],
    sink: &mut GradSink<T>,
) {
    match kind {
        Reduce::Max => scatter_argmax(x, argmax, gy, sink),
        Reduce::Mean => {
            let (outer, len, inner) = split_axis(g.shape(x), axis);
            let inv = T::one() / T::from_usize(len).unwrap();
            if let Some(gx) = sink.slot(x) {
                for o in 0..outer {
                    for k in 0..len {
                        for i in 0..inner {
                            let idx = (o * len + k) * inner + i;
                            gx[idx] = gx[idx] + gy[o * inner + i] * inv;
                        }
                    }
                }
            }
        }
    }
}
