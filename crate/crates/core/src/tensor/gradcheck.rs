//! Central finite-difference gradient checking.
//!
//! The numerical side only ever runs forward passes, so it stays
//! independent of every backward rule it verifies.

use super::{Graph, ParamStore, Result, Tensor, Var};

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    /// Largest `|analytic − numeric| / max(|analytic|, |numeric|, floor)`.
    pub max_rel_err: f64,
    pub worst_input: usize,
    pub worst_index: usize,
    pub checked: usize,
}

/// Compares backward-pass gradients of the scalar built by `f` against
/// central differences with step `h`, for every element of every input.
pub fn check_gradients<F>(inputs: &[Tensor<f64>], h: f64, floor: f64, f: F) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Result<Var>,
{
    let mut store = ParamStore::new();
    let ids: Vec<_> = inputs
        .iter()
        .enumerate()
        .map(|(i, t)| store.add(&format!("input{i}"), t.clone(), false))
        .collect::<Result<_>>()?;
    let mut g = Graph::new();
    let vars: Vec<Var> = ids.iter().map(|&id| g.param(&store, id)).collect();
    let loss = f(&mut g, &vars)?;
    g.backward(loss, &mut store)?;

    let eval = |values: &[Tensor<f64>]| -> Result<f64> {
        let mut g = Graph::new();
        let vars: Vec<Var> = values.iter().map(|t| g.input(t.clone())).collect();
        let out = f(&mut g, &vars)?;
        Ok(g.value(out).data()[0])
    };

    let mut report = GradCheckReport { max_rel_err: 0.0, worst_input: 0, worst_index: 0, checked: 0 };
    let mut values: Vec<Tensor<f64>> = inputs.to_vec();
    for (i, id) in ids.iter().enumerate() {
        let analytic = store.get(*id).grad.data().to_vec();
        for (j, &a) in analytic.iter().enumerate() {
            let orig = values[i].data()[j];
            values[i].data_mut()[j] = orig + h;
            let plus = eval(&values)?;
            values[i].data_mut()[j] = orig - h;
            let minus = eval(&values)?;
            values[i].data_mut()[j] = orig;
            let numeric = (plus - minus) / (2.0 * h);
            let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(floor);
            if err > report.max_rel_err {
                report.max_rel_err = err;
                report.worst_input = i;
                report.worst_index = j;
            }
            report.checked += 1;
        }
    }
    Ok(report)
}

/// Finite-difference step used by [`op_suite`].
pub const SUITE_STEP: f64 = 1e-4;
/// Denominator floor of the relative error used by [`op_suite`].
pub const SUITE_FLOOR: f64 = 1e-6;

fn random_tensor(rng: &mut impl rand::Rng, shape: &[usize]) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.gen_range(-1.0..1.0))
}

/// Values bounded away from zero and pairwise distinct, so ReLU and
/// max-style ops are evaluated off their kinks.
fn kink_free(rng: &mut impl rand::Rng, shape: &[usize]) -> Tensor<f64> {
    let n: usize = shape.iter().product();
    let mut vals: Vec<f64> = (0..n).map(|i| 0.1 + 0.9 * i as f64 / n as f64).collect();
    for v in vals.iter_mut() {
        if rng.gen_bool(0.5) {
            *v = -*v;
        }
    }
    use rand::seq::SliceRandom;
    vals.shuffle(rng);
    Tensor::new(shape.to_vec(), vals).expect("shape")
}

/// Weighted sum `Σ r ⊙ y` with a fixed random `r`, making every output
/// element contribute a distinct sensitivity.
fn probe(g: &mut Graph<f64>, y: Var, seed: u64) -> Result<Var> {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let r = random_tensor(&mut rng, g.shape(y));
    let r = g.input(r);
    let prod = g.mul(y, r)?;
    Ok(g.sum(prod))
}

type Case = (&'static str, Vec<Tensor<f64>>, Box<dyn Fn(&mut Graph<f64>, &[Var]) -> Result<Var>>);

/// Gradient checks for every differentiable operation of the engine.
pub fn op_suite(seed: u64) -> Result<Vec<(&'static str, GradCheckReport)>> {
    use super::{GlobalPool, Mode, Padding, Reduce};
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut r = |shape: &[usize]| random_tensor(&mut rng, shape);
    let mut cases: Vec<Case> = vec![
        (
            "conv2d_same",
            vec![r(&[2, 5, 5, 3]), r(&[3, 3, 3, 4]), r(&[4])],
            Box::new(|g, v| {
                let y = g.conv2d(v[0], v[1], Some(v[2]), (1, 1), Padding::Same)?;
                probe(g, y, 1)
            }),
        ),
        (
            "conv2d_valid_stride2",
            vec![r(&[2, 6, 7, 2]), r(&[2, 3, 2, 3]), r(&[3])],
            Box::new(|g, v| {
                let y = g.conv2d(v[0], v[1], Some(v[2]), (2, 2), Padding::Valid)?;
                probe(g, y, 2)
            }),
        ),
        (
            "conv2d_4x1_same",
            vec![r(&[1, 8, 4, 2]), r(&[4, 1, 2, 3]), r(&[3])],
            Box::new(|g, v| {
                let y = g.conv2d(v[0], v[1], Some(v[2]), (1, 1), Padding::Same)?;
                probe(g, y, 3)
            }),
        ),
        (
            "conv2d_1x1",
            vec![r(&[2, 3, 4, 3]), r(&[1, 1, 3, 2])],
            Box::new(|g, v| {
                let y = g.conv2d(v[0], v[1], None, (1, 1), Padding::Same)?;
                probe(g, y, 4)
            }),
        ),
        (
            "dense",
            vec![r(&[3, 5]), r(&[5, 4]), r(&[4])],
            Box::new(|g, v| {
                let y = g.dense(v[0], v[1], Some(v[2]))?;
                probe(g, y, 5)
            }),
        ),
        (
            "batch_norm_train",
            vec![r(&[2, 3, 4, 3]), r(&[3]), r(&[3])],
            Box::new(|g, v| {
                let (y, _) = g.batch_norm_train(v[0], v[1], v[2], 1e-3)?;
                probe(g, y, 6)
            }),
        ),
        (
            "batch_norm_eval",
            vec![r(&[2, 3, 4, 3]), r(&[3]), r(&[3])],
            Box::new(|g, v| {
                let y = g.batch_norm_eval(v[0], v[1], v[2], &[0.1, -0.2, 0.3], &[0.5, 1.5, 2.0], 1e-3)?;
                probe(g, y, 7)
            }),
        ),
        (
            "softmax_last_axis",
            vec![r(&[3, 5])],
            Box::new(|g, v| {
                let y = g.softmax(v[0], 1)?;
                probe(g, y, 8)
            }),
        ),
        (
            "softmax_axis0",
            vec![r(&[4, 3])],
            Box::new(|g, v| {
                let y = g.softmax(v[0], 0)?;
                probe(g, y, 9)
            }),
        ),
        (
            "avg_pool_same_3x3",
            vec![r(&[2, 5, 6, 2])],
            Box::new(|g, v| {
                let y = g.avg_pool(v[0], (3, 3), (1, 1), Padding::Same)?;
                probe(g, y, 10)
            }),
        ),
        (
            "avg_pool_valid_stride2",
            vec![r(&[1, 6, 6, 2])],
            Box::new(|g, v| {
                let y = g.avg_pool(v[0], (2, 3), (2, 2), Padding::Valid)?;
                probe(g, y, 11)
            }),
        ),
        (
            "residual_norm",
            vec![r(&[2, 3, 4, 3])],
            Box::new(|g, v| {
                let y = g.residual_norm(v[0], 0.4, 1e-5)?;
                probe(g, y, 12)
            }),
        ),
        (
            "concat_channels",
            vec![r(&[2, 2, 3, 2]), r(&[2, 2, 3, 3])],
            Box::new(|g, v| {
                let y = g.concat(&[v[0], v[1]], 3)?;
                probe(g, y, 13)
            }),
        ),
        (
            "concat_rows",
            vec![r(&[2, 3]), r(&[2, 5])],
            Box::new(|g, v| {
                let y = g.concat(&[v[0], v[1]], 1)?;
                probe(g, y, 14)
            }),
        ),
        (
            "add",
            vec![r(&[2, 3, 2, 2]), r(&[2, 3, 2, 2])],
            Box::new(|g, v| {
                let y = g.add(v[0], v[1])?;
                probe(g, y, 15)
            }),
        ),
        (
            "mul_scale_neg",
            vec![r(&[3, 4]), r(&[3, 4])],
            Box::new(|g, v| {
                let y = g.mul(v[0], v[1])?;
                let y = g.scale(y, 1.7);
                let y = g.neg(y);
                probe(g, y, 16)
            }),
        ),
        (
            "global_avg_freq",
            vec![r(&[2, 3, 4, 2])],
            Box::new(|g, v| {
                let y = g.global_pool(v[0], GlobalPool::AvgFreq)?;
                probe(g, y, 17)
            }),
        ),
        (
            "global_avg_channel",
            vec![r(&[2, 3, 4, 2])],
            Box::new(|g, v| {
                let y = g.global_pool(v[0], GlobalPool::AvgChannel)?;
                probe(g, y, 18)
            }),
        ),
        (
            "kl_div",
            vec![Tensor::from_fn(&[2, 4], |i| 0.1 + 0.05 * i as f64)],
            Box::new(|g, v| {
                let target = Tensor::new(vec![2, 4], vec![0.1, 0.2, 0.3, 0.4, 0.0, 0.5, 0.25, 0.25])?;
                g.kl_div(target, v[0])
            }),
        ),
        (
            "softmax_kl",
            vec![r(&[3, 4])],
            Box::new(|g, v| {
                let p = g.softmax(v[0], 1)?;
                let target = Tensor::new(vec![3, 4], vec![1.0, 0.0, 0.0, 0.0, 0.3, 0.7, 0.0, 0.0, 0.25, 0.25, 0.25, 0.25])?;
                g.kl_div(target, p)
            }),
        ),
        (
            "dropout_fixed_mask",
            vec![r(&[4, 6])],
            Box::new(|g, v| {
                let mut drng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
                let y = g.dropout(v[0], 0.3, Mode::Train, &mut drng);
                probe(g, y, 20)
            }),
        ),
    ];
    // Kink-sensitive ops get inputs that keep every perturbation on one side.
    cases.push((
        "reduce_mean_then_max",
        vec![kink_free(&mut rng, &[2, 3, 4, 2])],
        Box::new(|g, v| {
            let y = g.reduce(v[0], 1, Reduce::Mean)?;
            let y = g.reduce(y, 1, Reduce::Max)?;
            probe(g, y, 19)
        }),
    ));
    cases.push((
        "relu_abs",
        vec![kink_free(&mut rng, &[3, 5])],
        Box::new(|g, v| {
            let a = g.relu(v[0]);
            let b = g.abs(v[0]);
            let y = g.add(a, b)?;
            probe(g, y, 21)
        }),
    ));
    cases.push((
        "max_pool_2x2",
        vec![kink_free(&mut rng, &[2, 4, 6, 2])],
        Box::new(|g, v| {
            let y = g.max_pool(v[0], (2, 2), (2, 2))?;
            probe(g, y, 22)
        }),
    ));
    cases.push((
        "global_max_time",
        vec![kink_free(&mut rng, &[2, 3, 4, 2])],
        Box::new(|g, v| {
            let y = g.global_pool(v[0], GlobalPool::MaxTime)?;
            probe(g, y, 23)
        }),
    ));
    cases
        .into_iter()
        .map(|(name, inputs, f)| Ok((name, check_gradients(&inputs, SUITE_STEP, SUITE_FLOOR, f)?)))
        .collect()
}
