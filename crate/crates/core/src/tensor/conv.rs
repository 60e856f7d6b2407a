use super::graph::{GradSink, Op};
use super::{gemm, Graph, Real, Result, Tensor, TensorError, Var};

/// Upper bound on im2col buffer elements per GEMM call.
const COLS_BUDGET: usize = 1 << 22;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Padding {
    /// Zero padding so that the output has `ceil(input / stride)` positions;
    /// odd padding puts the extra row/column at the end.
    Same,
    Valid,
}

/// Resolved geometry of one 2-D convolution over `[B, F, T, C]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeom {
    pub batch: usize,
    pub in_f: usize,
    pub in_t: usize,
    pub cin: usize,
    pub kf: usize,
    pub kt: usize,
    pub cout: usize,
    pub sf: usize,
    pub st: usize,
    pub pad_f: usize,
    pub pad_t: usize,
    pub out_f: usize,
    pub out_t: usize,
}

/// Output length and leading pad for one spatial axis.
pub(crate) fn axis_out(input: usize, kernel: usize, stride: usize, padding: Padding) -> Option<(usize, usize)> {
    match padding {
        Padding::Same => {
            let out = input.div_ceil(stride);
            let total = ((out - 1) * stride + kernel).saturating_sub(input);
            Some((out, total / 2))
        }
        Padding::Valid => (input >= kernel).then(|| ((input - kernel) / stride + 1, 0)),
    }
}

impl ConvGeom {
    pub fn new(input: &[usize], kernel: &[usize], stride: (usize, usize), padding: Padding) -> Result<Self> {
        let bad = || TensorError::ShapeMismatch(format!("conv2d: input {input:?}, kernel {kernel:?}, stride {stride:?}"));
        if input.len() != 4 || kernel.len() != 4 || input[3] != kernel[2] || stride.0 == 0 || stride.1 == 0 {
            return Err(bad());
        }
        let (out_f, pad_f) = axis_out(input[1], kernel[0], stride.0, padding).ok_or_else(bad)?;
        let (out_t, pad_t) = axis_out(input[2], kernel[1], stride.1, padding).ok_or_else(bad)?;
        Ok(Self {
            batch: input[0],
            in_f: input[1],
            in_t: input[2],
            cin: input[3],
            kf: kernel[0],
            kt: kernel[1],
            cout: kernel[3],
            sf: stride.0,
            st: stride.1,
            pad_f,
            pad_t,
            out_f,
            out_t,
        })
    }

    pub fn output_shape(&self) -> [usize; 4] {
        [self.batch, self.out_f, self.out_t, self.cout]
    }

    fn patch(&self) -> usize {
        self.kf * self.kt * self.cin
    }

    fn positions(&self) -> usize {
        self.out_f * self.out_t
    }

    fn is_pointwise(&self) -> bool {
        self.kf == 1 && self.kt == 1 && self.sf == 1 && self.st == 1
    }

    fn samples_per_chunk(&self) -> usize {
        (COLS_BUDGET / (self.positions() * self.patch()).max(1)).clamp(1, self.batch.max(1))
    }

    /// Gathers receptive fields of one sample into `cols[P × K]`.
    fn im2col<T: Real>(&self, x: &[T], cols: &mut [T]) {
        let k = self.patch();
        for of in 0..self.out_f {
            for ot in 0..self.out_t {
                let row = &mut cols[(of * self.out_t + ot) * k..][..k];
                for i in 0..self.kf {
                    let f = (of * self.sf + i) as isize - self.pad_f as isize;
                    for j in 0..self.kt {
                        let t = (ot * self.st + j) as isize - self.pad_t as isize;
                        let dst = &mut row[(i * self.kt + j) * self.cin..][..self.cin];
                        if f < 0 || t < 0 || f as usize >= self.in_f || t as usize >= self.in_t {
                            dst.iter_mut().for_each(|v| *v = T::zero());
                        } else {
                            let src = (f as usize * self.in_t + t as usize) * self.cin;
                            dst.copy_from_slice(&x[src..src + self.cin]);
                        }
                    }
                }
            }
        }
    }

    /// Adjoint of [`im2col`](Self::im2col): scatter-adds `cols` into `x`.
    fn col2im<T: Real>(&self, cols: &[T], x: &mut [T]) {
        let k = self.patch();
        for of in 0..self.out_f {
            for ot in 0..self.out_t {
                let row = &cols[(of * self.out_t + ot) * k..][..k];
                for i in 0..self.kf {
                    let f = (of * self.sf + i) as isize - self.pad_f as isize;
                    if f < 0 || f as usize >= self.in_f {
                        continue;
                    }
                    for j in 0..self.kt {
                        let t = (ot * self.st + j) as isize - self.pad_t as isize;
                        if t < 0 || t as usize >= self.in_t {
                            continue;
                        }
                        let src = &row[(i * self.kt + j) * self.cin..][..self.cin];
                        let dst = &mut x[(f as usize * self.in_t + t as usize) * self.cin..][..self.cin];
                        for (a, &v) in dst.iter_mut().zip(src) {
                            *a = *a + v;
                        }
                    }
                }
            }
        }
    }
}

impl<T: Real> Graph<T> {
    /// Cross-correlation of `x[B,F,T,Cin]` with `w[kF,kT,Cin,Cout]` plus bias.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Option<Var>, stride: (usize, usize), padding: Padding) -> Result<Var> {
        let geom = ConvGeom::new(self.shape(x), self.shape(w), stride, padding)?;
        if let Some(b) = b {
            if self.shape(b) != [geom.cout] {
                return Err(TensorError::ShapeMismatch(format!("conv2d bias {:?}", self.shape(b))));
            }
        }
        let out = conv2d_forward(
            &geom,
            self.value(x).data(),
            self.value(w).data(),
            b.map(|b| self.value(b).data()),
        );
        let out = Tensor::new(geom.output_shape().to_vec(), out)?;
        let inputs: Vec<Var> = [Some(x), Some(w), b].into_iter().flatten().collect();
        Ok(self.push(out, Op::Conv2d { x, w, b, geom }, &inputs))
    }
}

pub(crate) fn conv2d_forward<T: Real>(geom: &ConvGeom, x: &[T], w: &[T], b: Option<&[T]>) -> Vec<T> {
    let (p, k, cout) = (geom.positions(), geom.patch(), geom.cout);
    let in_len = geom.in_f * geom.in_t * geom.cin;
    let mut out = vec![T::zero(); geom.batch * p * cout];
    if let Some(b) = b {
        for row in out.chunks_mut(cout) {
            row.copy_from_slice(b);
        }
    }
    if geom.is_pointwise() {
        gemm(false, false, geom.batch * p, cout, k, T::one(), x, w, T::one(), &mut out);
        return out;
    }
    let chunk = geom.samples_per_chunk();
    let mut cols = vec![T::zero(); chunk * p * k];
    for start in (0..geom.batch).step_by(chunk) {
        let nb = chunk.min(geom.batch - start);
        for s in 0..nb {
            geom.im2col(&x[(start + s) * in_len..][..in_len], &mut cols[s * p * k..][..p * k]);
        }
        let dst = &mut out[start * p * cout..(start + nb) * p * cout];
        gemm(false, false, nb * p, cout, k, T::one(), &cols[..nb * p * k], w, T::one(), dst);
    }
    out
}

pub(crate) fn conv2d_backward<T: Real>(
    g: &Graph<T>,
    x: Var,
    w: Var,
    b: Option<Var>,
    geom: &ConvGeom,
    gy: &[T],
    sink: &mut GradSink<T>,
) {
    let (p, k, cout) = (geom.positions(), geom.patch(), geom.cout);
    let in_len = geom.in_f * geom.in_t * geom.cin;
    let xv = g.value(x).data();
    let wv = g.value(w).data();
    if let Some(b) = b {
        if let Some(gb) = sink.slot(b) {
            for row in gy.chunks(cout) {
                for (a, &v) in gb.iter_mut().zip(row) {
                    *a = *a + v;
                }
            }
        }
    }
    let (want_w, want_x) = (sink.wants(w), sink.wants(x));
    if geom.is_pointwise() {
        let m = geom.batch * p;
        if let Some(gw) = sink.slot(w) {
            gemm(true, false, k, cout, m, T::one(), xv, gy, T::one(), gw);
        }
        if let Some(gx) = sink.slot(x) {
            gemm(false, true, m, k, cout, T::one(), gy, wv, T::one(), gx);
        }
        return;
    }
    let chunk = geom.samples_per_chunk();
    let mut cols = vec![T::zero(); chunk * p * k];
    for start in (0..geom.batch).step_by(chunk) {
        let nb = chunk.min(geom.batch - start);
        let gy_chunk = &gy[start * p * cout..(start + nb) * p * cout];
        if want_w {
            for s in 0..nb {
                geom.im2col(&xv[(start + s) * in_len..][..in_len], &mut cols[s * p * k..][..p * k]);
            }
            let gw = sink.slot(w).expect("wanted");
            gemm(true, false, k, cout, nb * p, T::one(), &cols[..nb * p * k], gy_chunk, T::one(), gw);
        }
        if want_x {
            let dcols = &mut cols[..nb * p * k];
            gemm(false, true, nb * p, k, cout, T::one(), gy_chunk, wv, T::zero(), dcols);
            let gx = sink.slot(x).expect("wanted");
            for s in 0..nb {
                geom.col2im(&dcols[s * p * k..][..p * k], &mut gx[(start + s) * in_len..][..in_len]);
            }
        }
    }
}
