use super::conv::ConvGeom;
use super::param::{ParamId, ParamStore};
use super::pool::{PoolGeom, Reduce};
use super::{basic, conv, norm, pool, Real, Result, Tensor, TensorError};

/// Handle to a node of a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(pub(crate) usize);

pub(crate) enum Op<T> {
    Input,
    Param(ParamId),
    Conv2d { x: Var, w: Var, b: Option<Var>, geom: ConvGeom },
    Dense { x: Var, w: Var, b: Option<Var> },
    BatchNorm { x: Var, gamma: Var, beta: Var, xhat: Vec<T>, inv_std: Vec<T>, train: bool },
    ResidualNorm { x: Var, lambda: T, xhat: Vec<T>, inv_std: Vec<T> },
    Relu { x: Var },
    Neg { x: Var },
    Abs { x: Var },
    Scale { x: Var, factor: T },
    Add { a: Var, b: Var },
    Mul { a: Var, b: Var },
    Sum { x: Var },
    Reshape { x: Var },
    Softmax { x: Var, axis: usize },
    Dropout { x: Var, mask: Vec<T> },
    Concat { parts: Vec<Var>, axis: usize },
    MaxPool { x: Var, argmax: Vec<u32> },
    AvgPool { x: Var, geom: PoolGeom },
    Reduce { x: Var, axis: usize, kind: Reduce, argmax: Vec<u32> },
    KlDiv { target: Vec<T>, pred: Var },
}

pub(crate) struct Node<T> {
    pub value: Tensor<T>,
    pub op: Op<T>,
    pub needs_grad: bool,
}

/// Append-only tape of operations. Node order is a topological order, so
/// the backward pass simply walks the tape in reverse.
pub struct Graph<T> {
    pub(crate) nodes: Vec<Node<T>>,
}

impl<T: Real> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

/// Gradient accumulators for one backward pass.
pub(crate) struct GradSink<'a, T> {
    grads: Vec<Option<Vec<T>>>,
    nodes: &'a [Node<T>],
}

impl<T: Real> GradSink<'_, T> {
    /// Mutable accumulator for `v`, or `None` when `v` does not need a gradient.
    pub fn slot(&mut self, v: Var) -> Option<&mut [T]> {
        let node = &self.nodes[v.0];
        if !node.needs_grad {
            return None;
        }
        let n = node.value.numel();
        Some(self.grads[v.0].get_or_insert_with(|| vec![T::zero(); n]).as_mut_slice())
    }

    pub fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }
}

impl<T: Real> Graph<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub(crate) fn push(&mut self, value: Tensor<T>, op: Op<T>, inputs: &[Var]) -> Var {
        let needs_grad = match op {
            Op::Param(_) => true,
            Op::Input => false,
            _ => inputs.iter().any(|v| self.nodes[v.0].needs_grad),
        };
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    /// Constant leaf; never receives a gradient.
    pub fn input(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Input, &[])
    }

    /// Leaf bound to a parameter; its gradient is accumulated into the store.
    pub fn param(&mut self, store: &ParamStore<T>, id: ParamId) -> Var {
        self.push(store.get(id).value.clone(), Op::Param(id), &[])
    }

    /// Reverse-mode sweep from the scalar `loss`, adding `∂loss/∂θ` into
    /// `store`'s gradient buffers. Parameters the loss does not depend on
    /// keep their current (typically zero) gradient.
    pub fn backward(&self, loss: Var, store: &mut ParamStore<T>) -> Result<()> {
        let shape = self.shape(loss);
        if self.value(loss).numel() != 1 {
            return Err(TensorError::NonScalarLoss(shape.to_vec()));
        }
        let mut sink = GradSink { grads: (0..self.nodes.len()).map(|_| None).collect(), nodes: &self.nodes };
        if !self.nodes[loss.0].needs_grad {
            return Ok(());
        }
        sink.grads[loss.0] = Some(vec![T::one()]);
        for idx in (0..=loss.0).rev() {
            let Some(gy) = sink.grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Input => {}
                Op::Param(id) => {
                    let g = store.get_mut(*id).grad.data_mut();
                    for (a, b) in g.iter_mut().zip(&gy) {
                        *a = *a + *b;
                    }
                }
                Op::Conv2d { x, w, b, geom } => {
                    conv::conv2d_backward(self, *x, *w, *b, geom, &gy, &mut sink)
                }
                Op::Dense { x, w, b } => basic::dense_backward(self, *x, *w, *b, &gy, &mut sink),
                Op::BatchNorm { x, gamma, beta, xhat, inv_std, train } => norm::batch_norm_backward(
                    self, *x, *gamma, *beta, xhat, inv_std, *train, &gy, &mut sink,
                ),
                Op::ResidualNorm { x, lambda, xhat, inv_std } => {
                    norm::residual_norm_backward(self, *x, *lambda, xhat, inv_std, &gy, &mut sink)
                }
                Op::Relu { x } => basic::relu_backward(self, *x, &gy, &mut sink),
                Op::Neg { x } => basic::scale_backward(*x, T::one().neg(), &gy, &mut sink),
                Op::Abs { x } => basic::abs_backward(self, *x, &gy, &mut sink),
                Op::Scale { x, factor } => basic::scale_backward(*x, *factor, &gy, &mut sink),
                Op::Add { a, b } => {
                    basic::scale_backward(*a, T::one(), &gy, &mut sink);
                    basic::scale_backward(*b, T::one(), &gy, &mut sink);
                }
                Op::Mul { a, b } => basic::mul_backward(self, *a, *b, &gy, &mut sink),
                Op::Sum { x } => basic::sum_backward(*x, gy[0], &mut sink),
                Op::Reshape { x } => basic::scale_backward(*x, T::one(), &gy, &mut sink),
                Op::Softmax { x, axis } => {
                    basic::softmax_backward(&node.value, *x, *axis, &gy, &mut sink)
                }
                Op::Dropout { x, mask } => basic::dropout_backward(*x, mask, &gy, &mut sink),
                Op::Concat { parts, axis } => basic::concat_backward(self, parts, *axis, &gy, &mut sink),
                Op::MaxPool { x, argmax } => pool::scatter_argmax(*x, argmax, &gy, &mut sink),
                Op::AvgPool { x, geom } => pool::avg_pool_backward(*x, geom, &gy, &mut sink),
                Op::Reduce { x, axis, kind, argmax } => {
                    pool::reduce_backward(self, *x, *axis, *kind, argmax, &gy, &mut sink)
                }
                Op::KlDiv { target, pred } => basic::kl_backward(self, target, *pred, gy[0], &mut sink),
            }
        }
        Ok(())
    }
}
