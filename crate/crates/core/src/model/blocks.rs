use rand_chacha::ChaCha8Rng;

use super::spec::LayerDesc;
use super::{PoolingLayout, Result};
use crate::tensor::{BatchStats, Graph, Mode, Padding, ParamId, ParamStore, Reduce, Tensor, Var};

/// Running statistics of one batch-norm layer (not trainable).
#[derive(Debug, Clone)]
pub(crate) struct BnState {
    pub name: String,
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

/// Per-forward state shared by all layers.
pub(crate) struct Ctx<'a> {
    pub mode: Mode,
    pub rng: &'a mut ChaCha8Rng,
    pub params: &'a ParamStore<f32>,
    pub bn: &'a [BnState],
    pub eps: f64,
    pub updates: Vec<(usize, BatchStats)>,
}

pub(crate) struct Conv {
    w: ParamId,
    b: ParamId,
}

pub(crate) struct Bn {
    gamma: ParamId,
    beta: ParamId,
    slot: usize,
}

pub(crate) struct Dense {
    w: ParamId,
    b: ParamId,
}

impl Conv {
    fn forward(&self, g: &mut Graph<f32>, ctx: &Ctx, x: Var) -> Result<Var> {
        let w = g.param(ctx.params, self.w);
        let b = g.param(ctx.params, self.b);
        Ok(g.conv2d(x, w, Some(b), (1, 1), Padding::Same)?)
    }
}

impl Bn {
    fn forward(&self, g: &mut Graph<f32>, ctx: &mut Ctx, x: Var) -> Result<Var> {
        let gamma = g.param(ctx.params, self.gamma);
        let beta = g.param(ctx.params, self.beta);
        match ctx.mode {
            Mode::Train => {
                let (y, stats) = g.batch_norm_train(x, gamma, beta, ctx.eps)?;
                ctx.updates.push((self.slot, stats));
                Ok(y)
            }
            Mode::Eval => {
                let s = &ctx.bn[self.slot];
                Ok(g.batch_norm_eval(x, gamma, beta, &s.mean, &s.var, ctx.eps)?)
            }
        }
    }
}

impl Dense {
    fn forward(&self, g: &mut Graph<f32>, ctx: &Ctx, x: Var) -> Result<Var> {
        let w = g.param(ctx.params, self.w);
        let b = g.param(ctx.params, self.b);
        Ok(g.dense(x, w, Some(b))?)
    }
}

/// Accumulates parameters, batch-norm slots and summary rows while a
/// network is assembled. Shapes are per sample: `[F, T, C]`.
#[derive(Default)]
pub(crate) struct Builder {
    pub params: ParamStore<f32>,
    pub bn: Vec<BnState>,
    pub layers: Vec<LayerDesc>,
}

impl Builder {
    fn conv(&mut self, name: &str, kernel: (usize, usize), cin: usize, cout: usize) -> Result<Conv> {
        let w = self.params.add(&format!("{name}.w"), Tensor::zeros(&[kernel.0, kernel.1, cin, cout]), true)?;
        let b = self.params.add(&format!("{name}.b"), Tensor::zeros(&[cout]), false)?;
        Ok(Conv { w, b })
    }

    fn bn(&mut self, name: &str, c: usize) -> Result<Bn> {
        let gamma = self.params.add(&format!("{name}.gamma"), Tensor::full(&[c], 1.0), false)?;
        let beta = self.params.add(&format!("{name}.beta"), Tensor::zeros(&[c]), false)?;
        self.bn.push(BnState { name: name.to_string(), mean: vec![0.0; c], var: vec![1.0; c] });
        Ok(Bn { gamma, beta, slot: self.bn.len() - 1 })
    }

    fn dense(&mut self, name: &str, din: usize, dout: usize) -> Result<Dense> {
        let w = self.params.add(&format!("{name}.w"), Tensor::zeros(&[din, dout]), true)?;
        let b = self.params.add(&format!("{name}.b"), Tensor::zeros(&[dout]), false)?;
        Ok(Dense { w, b })
    }

    pub fn row(&mut self, name: &str, kind: String, input: &[usize], output: &[usize], params: usize) {
        self.layers.push(LayerDesc {
            name: name.to_string(),
            kind,
            input: input.to_vec(),
            output: output.to_vec(),
            params,
        });
    }

    /// Runs `f`, returning its value and the number of parameters it added.
    fn counted<R>(&mut self, f: impl FnOnce(&mut Self) -> Result<R>) -> Result<(R, usize)> {
        let before = self.params.total_elements();
        let r = f(self)?;
        Ok((r, self.params.total_elements() - before))
    }
}

/// Even split of `c` channels over three branches, larger shares first.
pub(crate) fn branch_split(c: usize) -> [usize; 3] {
    let base = c / 3;
    let rem = c % 3;
    [base + usize::from(rem > 0), base + usize::from(rem > 1), base]
}

/// Max-pool 2×2, dropout, residual normalization: the common block tail.
struct BlockTail {
    dropout: f64,
    rn_lambda: f64,
}

impl BlockTail {
    fn build(b: &mut Builder, name: &str, shape: [usize; 3], dropout: f64, rn_lambda: f64) -> Result<(Self, [usize; 3])> {
        let pooled = [shape[0] / 2, shape[1] / 2, shape[2]];
        if pooled[0] == 0 || pooled[1] == 0 {
            return Err(super::ModelError::ConfigMismatch(format!(
                "{name}: map {shape:?} too small for 2x2 max pooling"
            )));
        }
        b.row(&format!("{name}.pool"), "MP[2x2]".into(), &shape, &pooled, 0);
        b.row(&format!("{name}.dropout"), format!("Dr({dropout})"), &pooled, &pooled, 0);
        b.row(&format!("{name}.rn"), format!("RN(lambda={rn_lambda})"), &pooled, &pooled, 0);
        Ok((Self { dropout, rn_lambda }, pooled))
    }

    fn forward(&self, g: &mut Graph<f32>, ctx: &mut Ctx, x: Var) -> Result<Var> {
        let y = g.max_pool(x, (2, 2), (2, 2))?;
        let y = g.dropout(y, self.dropout, ctx.mode, ctx.rng);
        Ok(g.residual_norm(y, self.rn_lambda, 1e-5)?)
    }
}

/// Inc01: parallel 3×3, 1×1 and 4×1 branches concatenated, then BN.
pub(crate) struct Inc01Unit {
    branches: Vec<(Conv, Bn)>,
    bn_out: Bn,
}

const INC01_KERNELS: [(usize, usize); 3] = [(3, 3), (1, 1), (4, 1)];

impl Inc01Unit {
    fn build(b: &mut Builder, name: &str, cin: usize, c: usize) -> Result<Self> {
        let mut branches = Vec::new();
        for (kernel, width) in INC01_KERNELS.iter().zip(branch_split(c)) {
            let bname = format!("{name}.b{}x{}", kernel.0, kernel.1);
            let conv = b.conv(&format!("{bname}.conv"), *kernel, cin, width)?;
            let bn = b.bn(&format!("{bname}.bn"), width)?;
            branches.push((conv, bn));
        }
        let bn_out = b.bn(&format!("{name}.bn"), c)?;
        Ok(Self { branches, bn_out })
    }

    fn forward(&self, g: &mut Graph<f32>, ctx: &mut Ctx, x: Var) -> Result<Var> {
        let mut outs = Vec::with_capacity(3);
        for (conv, bn) in &self.branches {
            let y = conv.forward(g, ctx, x)?;
            let y = bn.forward(g, ctx, y)?;
            outs.push(g.relu(y));
        }
        let y = g.concat(&outs, 3)?;
        self.bn_out.forward(g, ctx, y)
    }
}

pub(crate) struct InceptionBlock {
    units: Vec<Inc01Unit>,
    tail: BlockTail,
}

impl InceptionBlock {
    pub fn build(
        b: &mut Builder,
        widths: &[usize],
        mut shape: [usize; 3],
        dropout: f64,
        rn_lambda: f64,
    ) -> Result<(Self, [usize; 3])> {
        let mut units = Vec::new();
        for (i, &c) in widths.iter().enumerate() {
            let name = format!("inception.unit{i}");
            let (unit, n) = b.counted(|b| Inc01Unit::build(b, &name, shape[2], c))?;
            let out = [shape[0], shape[1], c];
            b.row(&name, format!("Inc01[{c}]"), &shape, &out, n);
            units.push(unit);
            shape = out;
        }
        let (tail, shape) = BlockTail::build(b, "inception", shape, dropout, rn_lambda)?;
        Ok((Self { units, tail }, shape))
    }

    pub fn forward(&self, g: &mut Graph<f32>, ctx: &mut Ctx, mut x: Var) -> Result<Var> {
        for u in &self.units {
            x = u.forward(g, ctx, x)?;
        }
        self.tail.forward(g, ctx, x)
    }
}

/// Inc02[c×K]: K×1, K×K and 1×K branches, each smoothed by an average
/// pool with the same kernel, summed, plus a residual path.
pub(crate) struct Inc02Unit {
    branches: Vec<(Conv, Bn, (usize, usize))>,
    proj: Option<Conv>,
}

impl Inc02Unit {
    fn build(b: &mut Builder, name: &str, cin: usize, c: usize, k: usize) -> Result<Self> {
        let mut branches = Vec::new();
        for kernel in [(k, 1), (k, k), (1, k)] {
            let bname = format!("{name}.b{}x{}", kernel.0, kernel.1);
            let conv = b.conv(&format!("{bname}.conv"), kernel, cin, c)?;
            let bn = b.bn(&format!("{bname}.bn"), c)?;
            branches.push((conv, bn, kernel));
        }
        let proj = if cin != c { Some(b.conv(&format!("{name}.proj"), (1, 1), cin, c)?) } else { None };
        Ok(Self { branches, proj })
    }

    fn forward(&self, g: &mut Graph<f32>, ctx: &mut Ctx, x: Var) -> Result<Var> {
        let mut acc: Option<Var> = None;
        for (conv, bn, kernel) in &self.branches {
            let y = conv.forward(g, ctx, x)?;
            let y = bn.forward(g, ctx, y)?;
            let y = g.relu(y);
            let y = g.avg_pool(y, *kernel, (1, 1), Padding::Same)?;
            acc = Some(match acc {
                Some(a) => g.add(a, y)?,
                None => y,
            });
        }
        let residual = match &self.proj {
            Some(p) => p.forward(g, ctx, x)?,
            None => x,
        };
        Ok(g.add(acc.expect("three branches"), residual)?)
    }
}

pub(crate) struct IncResBlock {
    units: Vec<Inc02Unit>,
    bn: Bn,
    tail: BlockTail,
}

impl IncResBlock {
    #[allow(clippy::too_many_arguments)]
    pub fn build(
        b: &mut Builder,
        index: usize,
        widths: &[usize],
        k: usize,
        mut shape: [usize; 3],
        dropout: f64,
        rn_lambda: f64,
    ) -> Result<(Self, [usize; 3])> {
        let mut units = Vec::new();
        for (i, &c) in widths.iter().enumerate() {
            let name = format!("incres{index}.unit{i}");
            let (unit, n) = b.counted(|b| Inc02Unit::build(b, &name, shape[2], c, k))?;
            let out = [shape[0], shape[1], c];
            b.row(&name, format!("Inc02[{c}x{k}]"), &shape, &out, n);
            units.push(unit);
            shape = out;
        }
        let name = format!("incres{index}.bn");
        let (bn, n) = b.counted(|b| b.bn(&name, shape[2]))?;
        b.row(&name, "BN".into(), &shape, &shape, n);
        let (tail, shape) = BlockTail::build(b, &format!("incres{index}"), shape, dropout, rn_lambda)?;
        Ok((Self { units, bn, tail }, shape))
    }

    pub fn forward(&self, g: &mut Graph<f32>, ctx: &mut Ctx, mut x: Var) -> Result<Var> {
        for u in &self.units {
            x = u.forward(g, ctx, x)?;
        }
        let x = self.bn.forward(g, ctx, x)?;
        self.tail.forward(g, ctx, x)
    }
}

/// Pooling Block (optional) and the fully connected classifier.
pub(crate) struct Head {
    pooling: Option<PoolingLayout>,
    hidden: Option<Dense>,
    out: Dense,
    dropout_fc: f64,
}

impl Head {
    /// `input` is `[F, T, C]` when `pooling` is set, otherwise `[D]`.
    pub fn build(
        b: &mut Builder,
        input: &[usize],
        pooling: Option<PoolingLayout>,
        hidden: Option<usize>,
        n_classes: usize,
        dropout_fc: f64,
    ) -> Result<(Self, Vec<usize>)> {
        let mut dim = match pooling {
            Some(p) => {
                let d = p.feature_dim(input[0], input[1], input[2]);
                b.row("head.pooling", format!("{p:?}"), input, &[d], 0);
                d
            }
            None => input[0],
        };
        let hidden = match hidden {
            Some(h) => {
                let (layer, n) = b.counted(|b| b.dense("head.fc1", dim, h))?;
                b.row("head.fc1", format!("FC[{h}]+ReLU+Dr({dropout_fc})"), &[dim], &[h], n);
                dim = h;
                Some(layer)
            }
            None => None,
        };
        let (out, n) = b.counted(|b| b.dense("head.fc_out", dim, n_classes))?;
        b.row("head.fc_out", format!("FC[{n_classes}]+Softmax"), &[dim], &[n_classes], n);
        Ok((Self { pooling, hidden, out, dropout_fc }, vec![n_classes]))
    }

    fn pool(&self, g: &mut Graph<f32>, x: Var, layout: PoolingLayout) -> Result<Var> {
        use crate::tensor::GlobalPool;
        let parts = match layout {
            PoolingLayout::ChannelDescriptors => {
                // Axes of [B, F, T, C]; each reduction drops one axis.
                let f_mean = g.reduce(x, 1, Reduce::Mean)?;
                let avg = g.reduce(f_mean, 1, Reduce::Mean)?;
                let t_max = g.reduce(x, 2, Reduce::Max)?;
                let max_t = g.reduce(t_max, 1, Reduce::Mean)?;
                let freq = g.reduce(f_mean, 1, Reduce::Max)?;
                vec![avg, max_t, freq]
            }
            PoolingLayout::FlattenedMaps => vec![
                g.global_pool(x, GlobalPool::AvgChannel)?,
                g.global_pool(x, GlobalPool::MaxTime)?,
                g.global_pool(x, GlobalPool::AvgFreq)?,
            ],
        };
        Ok(g.concat(&parts, 1)?)
    }

    pub fn forward(&self, g: &mut Graph<f32>, ctx: &mut Ctx, x: Var) -> Result<Var> {
        let mut h = match self.pooling {
            Some(layout) => self.pool(g, x, layout)?,
            None => x,
        };
        if let Some(fc) = &self.hidden {
            h = fc.forward(g, ctx, h)?;
            h = g.relu(h);
            h = g.dropout(h, self.dropout_fc, ctx.mode, ctx.rng);
        }
        let logits = self.out.forward(g, ctx, h)?;
        Ok(g.softmax(logits, 1)?)
    }
}
