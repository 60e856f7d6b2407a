use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::blocks::{BnState, Builder, Ctx, Head, IncResBlock, InceptionBlock};
use super::spec::NetworkSpec;
use super::{ArchConfig, ModelError, Result};
use crate::tensor::io::{read_weights, write_weights, WeightsError};
use crate::tensor::{BatchStats, Graph, Mode, ParamStore, Tensor, Var};

struct Backbone {
    inception: InceptionBlock,
    incres: Vec<IncResBlock>,
}

/// A built network: structure, trainable parameters and batch-norm
/// running statistics.
pub struct Network {
    name: String,
    input: Vec<usize>,
    n_classes: usize,
    backbone: Option<Backbone>,
    head: Head,
    params: ParamStore<f32>,
    bn: Vec<BnState>,
    bn_eps: f64,
    bn_momentum: f64,
    spec: NetworkSpec,
    loaded: bool,
}

/// Builds the backbone and head described by `arch`. Weights are left
/// unset until [`Network::init_weights`] or [`Network::load_weights`].
pub fn build_network(arch: &ArchConfig) -> Result<Network> {
    arch.validate()?;
    let mut b = Builder::default();
    let (inception, mut shape) =
        InceptionBlock::build(&mut b, &arch.inception_channels, arch.input, arch.dropout_block, arch.rn_lambda)?;
    let mut incres = Vec::new();
    for (i, (widths, &k)) in arch.incres_channels.iter().zip(&arch.incres_k).enumerate() {
        let (block, s) = IncResBlock::build(&mut b, i, widths, k, shape, arch.dropout_block, arch.rn_lambda)?;
        incres.push(block);
        shape = s;
    }
    let (head, output) =
        Head::build(&mut b, &shape, Some(arch.pooling), arch.head_hidden, arch.n_classes, arch.dropout_fc)?;
    Ok(Network::assemble(
        arch.variant.to_string(),
        arch.input.to_vec(),
        output,
        Some(Backbone { inception, incres }),
        head,
        b,
        arch.bn_eps,
        arch.bn_momentum,
    ))
}

/// MLP over precomputed embeddings: FC[1024] → ReLU → Dr(0.2) → FC[n] → softmax.
pub fn embedding_classifier(dim: usize, n_classes: usize) -> Result<Network> {
    if dim == 0 || n_classes < 2 {
        return Err(ModelError::ConfigMismatch("embedding dim must be positive and n_classes >= 2".into()));
    }
    let mut b = Builder::default();
    let (head, output) = Head::build(&mut b, &[dim], None, Some(1024), n_classes, 0.2)?;
    Ok(Network::assemble("embedding-mlp".into(), vec![dim], output, None, head, b, 1e-3, 0.99))
}

impl Network {
    #[allow(clippy::too_many_arguments)]
    fn assemble(
        name: String,
        input: Vec<usize>,
        output: Vec<usize>,
        backbone: Option<Backbone>,
        head: Head,
        b: Builder,
        bn_eps: f64,
        bn_momentum: f64,
    ) -> Self {
        let spec = NetworkSpec {
            name: name.clone(),
            input: input.clone(),
            output: output.clone(),
            total_params: b.params.total_elements(),
            layers: b.layers,
        };
        Self {
            name,
            input,
            n_classes: output[0],
            backbone,
            head,
            params: b.params,
            bn: b.bn,
            bn_eps,
            bn_momentum,
            spec,
            loaded: false,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    /// Per-sample input shape.
    pub fn input_shape(&self) -> &[usize] {
        &self.input
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn params(&self) -> &ParamStore<f32> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<f32> {
        &mut self.params
    }

    pub fn is_loaded(&self) -> bool {
        self.loaded
    }

    pub fn set_bn_momentum(&mut self, momentum: f64) {
        self.bn_momentum = momentum;
    }

    /// He-uniform weights, zero biases, unit BN scale; fully determined by `seed`.
    pub fn init_weights(&mut self, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for p in self.params.iter_mut() {
            let shape = p.value.shape().to_vec();
            if p.l2_included {
                // Weights are [kF, kT, Cin, Cout] or [Din, Dout].
                let fan_in: usize = shape[..shape.len() - 1].iter().product();
                let limit = (6.0 / fan_in as f64).sqrt() as f32;
                for v in p.value.data_mut() {
                    *v = rng.gen_range(-limit..limit);
                }
            } else if p.name.ends_with(".gamma") {
                p.value = Tensor::full(&shape, 1.0);
            } else {
                p.value = Tensor::zeros(&shape);
            }
            p.grad = Tensor::zeros(&shape);
        }
        for s in &mut self.bn {
            s.mean.iter_mut().for_each(|v| *v = 0.0);
            s.var.iter_mut().for_each(|v| *v = 1.0);
        }
        self.loaded = true;
    }

    /// Records the forward pass of `x` (`[B, ..input]`) on `g`. In training
    /// mode the returned batch statistics feed [`Network::apply_bn_updates`].
    pub fn forward(
        &self,
        g: &mut Graph<f32>,
        x: Var,
        mode: Mode,
        rng: &mut ChaCha8Rng,
    ) -> Result<(Var, Vec<(usize, BatchStats)>)> {
        let shape = g.shape(x);
        if shape.len() != self.input.len() + 1 || shape[1..] != self.input[..] {
            return Err(ModelError::ShapeMismatch(format!(
                "expected [B, {}], got {:?}",
                self.input.iter().map(|d| d.to_string()).collect::<Vec<_>>().join(", "),
                shape
            )));
        }
        let mut ctx = Ctx { mode, rng, params: &self.params, bn: &self.bn, eps: self.bn_eps, updates: Vec::new() };
        let mut h = x;
        if let Some(bb) = &self.backbone {
            h = bb.inception.forward(g, &mut ctx, h)?;
            for block in &bb.incres {
                h = block.forward(g, &mut ctx, h)?;
            }
        }
        let y = self.head.forward(g, &mut ctx, h)?;
        Ok((y, ctx.updates))
    }

    /// Exponential moving average of the batch statistics:
    /// `running = m · running + (1 − m) · batch`.
    pub fn apply_bn_updates(&mut self, updates: &[(usize, BatchStats)]) {
        let m = self.bn_momentum;
        for (slot, stats) in updates {
            let s = &mut self.bn[*slot];
            for (r, b) in s.mean.iter_mut().zip(&stats.mean) {
                *r = m * *r + (1.0 - m) * b;
            }
            for (r, b) in s.var.iter_mut().zip(&stats.var) {
                *r = m * *r + (1.0 - m) * b;
            }
        }
    }

    /// Eval-mode class probabilities for `n` samples stored contiguously in
    /// `batch`; returns `n × n_classes` values, row-major.
    pub fn predict(&self, batch: &[f32], n: usize) -> Result<Vec<f32>> {
        if !self.loaded {
            return Err(ModelError::WeightsNotLoaded);
        }
        let per: usize = self.input.iter().product();
        if batch.len() != n * per {
            return Err(ModelError::ShapeMismatch(format!(
                "{} values for {n} samples of {per}",
                batch.len()
            )));
        }
        const CHUNK: usize = 16;
        let mut out = Vec::with_capacity(n * self.n_classes);
        // Eval mode never draws from the generator.
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for (i, chunk) in batch.chunks(CHUNK * per).enumerate() {
            let b = chunk.len() / per;
            let mut shape = vec![b];
            shape.extend_from_slice(&self.input);
            let mut g = Graph::new();
            let x = g.input(Tensor::new(shape, chunk.to_vec())?);
            let (y, _) = self.forward(&mut g, x, Mode::Eval, &mut rng)?;
            out.extend_from_slice(g.value(y).data());
            debug_assert_eq!(out.len(), (i * CHUNK + b) * self.n_classes);
        }
        Ok(out)
    }

    /// Writes parameters plus running statistics.
    pub fn save_weights<W: Write>(&self, w: W) -> std::io::Result<()> {
        let stats: Vec<(String, Tensor<f32>)> = self
            .bn
            .iter()
            .flat_map(|s| {
                let to32 = |v: &[f64]| Tensor::from_fn(&[v.len()], |i| v[i] as f32);
                [(format!("{}.running_mean", s.name), to32(&s.mean)), (format!("{}.running_var", s.name), to32(&s.var))]
            })
            .collect();
        let mut entries: Vec<(&str, &Tensor<f32>)> = self.params.iter().map(|p| (p.name.as_str(), &p.value)).collect();
        entries.extend(stats.iter().map(|(n, t)| (n.as_str(), t)));
        write_weights(w, &entries)
    }

    /// Loads a file written by [`Network::save_weights`]; every tensor must
    /// be present with a matching shape.
    pub fn load_weights<R: Read>(&mut self, r: R) -> Result<()> {
        let entries = read_weights(r)?;
        let mut by_name: std::collections::HashMap<String, Tensor<f32>> = entries.into_iter().collect();
        let mut take = |name: &str, shape: &[usize]| -> Result<Tensor<f32>> {
            let t = by_name
                .remove(name)
                .ok_or_else(|| WeightsError::Malformed(format!("missing tensor '{name}'")))?;
            if t.shape() != shape {
                return Err(ModelError::ShapeMismatch(format!(
                    "tensor '{name}' has shape {:?}, expected {:?}",
                    t.shape(),
                    shape
                )));
            }
            Ok(t)
        };
        for p in self.params.iter_mut() {
            let shape = p.value.shape().to_vec();
            p.value = take(&p.name, &shape)?;
        }
        for s in &mut self.bn {
            let c = s.mean.len();
            s.mean = take(&format!("{}.running_mean", s.name), &[c])?.data().iter().map(|&v| v as f64).collect();
            s.var = take(&format!("{}.running_var", s.name), &[c])?.data().iter().map(|&v| v as f64).collect();
        }
        if let Some(extra) = by_name.keys().next() {
            return Err(WeightsError::Malformed(format!("unexpected tensor '{extra}'")).into());
        }
        self.loaded = true;
        Ok(())
    }
}
