//! Exhaustive PROD check on the 0.05 probability grid with three systems
//! and four classes, against exact integer arithmetic.

use ascnet::fusion::{argmax_row, prod_fusion, ProbMatrix};

pub const STEPS: u32 = 20;
const S: usize = 3;

#[derive(Debug)]
pub struct GridOutcome {
    /// Ordered per-class value triples checked against the exact rational.
    pub value_triples: usize,
    pub max_value_err: f64,
    /// Unordered system triples of grid rows checked for argmax.
    pub argmax_points: u64,
    pub argmax_mismatches: u64,
}

/// Rows of four non-negative integers summing to `STEPS`.
pub fn grid_rows() -> Vec<[u32; 4]> {
    let mut rows = Vec::new();
    for a in 0..=STEPS {
        for b in 0..=STEPS - a {
            for c in 0..=STEPS - a - b {
                rows.push([a, b, c, STEPS - a - b - c]);
            }
        }
    }
    rows
}

pub fn run() -> GridOutcome {
    let n = (STEPS + 1) as usize;
    // Sample (a, b, c) puts numerators a, b, c on class 0 of systems 0..3,
    // the remainder on class 1. Fusion is per class, so class 0 of these
    // samples covers every value any grid row can reach.
    let mut probs = Vec::with_capacity(S * n * n * n * 4);
    let mut ids = Vec::new();
    for s in 0..S {
        for a in 0..n {
            for b in 0..n {
                for c in 0..n {
                    let v = [a, b, c][s] as f64 / STEPS as f64;
                    probs.extend_from_slice(&[v, 1.0 - v, 0.0, 0.0]);
                    if s == 0 {
                        ids.push(format!("{a}-{b}-{c}"));
                    }
                }
            }
        }
    }
    let names = (0..S).map(|s| format!("sys{s}")).collect();
    let pm = ProbMatrix::new(probs, names, ids, 4).expect("grid matrix");
    let fused = prod_fusion(&pm);
    let denom = (STEPS as u64).pow(S as u32) as f64 * S as f64;
    let mut table = vec![0.0f64; n * n * n];
    let mut max_err = 0.0f64;
    for a in 0..n {
        for b in 0..n {
            for c in 0..n {
                let i = (a * n + b) * n + c;
                let exact = (a * b * c) as f64 / denom;
                let got = fused[i * 4];
                max_err = max_err.max((got - exact).abs());
                let rest = ((n - 1 - a) * (n - 1 - b) * (n - 1 - c)) as f64 / denom;
                max_err = max_err.max((fused[i * 4 + 1] - rest).abs());
                table[i] = got;
            }
        }
    }

    let rows = grid_rows();
    // Exact order of floored products: fewer zero factors always wins
    // (0.05³ ≫ 1e-12), then the product of the nonzero numerators.
    let split = |a: u32| if a == 0 { (1u32, 1u32) } else { (0, a) };
    let mut points = 0u64;
    let mut mismatches = 0u64;
    for (i, p) in rows.iter().enumerate() {
        for (j, q) in rows.iter().enumerate().skip(i) {
            let pq: [(u32, u32); 4] = std::array::from_fn(|k| {
                let ((zp, ap), (zq, aq)) = (split(p[k]), split(q[k]));
                (zp + zq, ap * aq)
            });
            let base: [usize; 4] = std::array::from_fn(|k| (p[k] as usize * n + q[k] as usize) * n);
            for r in &rows[j..] {
                let key = |k: usize| {
                    let (z, a) = split(r[k]);
                    ((3 - pq[k].0 - z) << 16) | (pq[k].1 * a)
                };
                let mut best = 0;
                let mut best_v = key(0);
                for k in 1..4 {
                    let v = key(k);
                    if v > best_v {
                        best = k;
                        best_v = v;
                    }
                }
                let ours: [f64; 4] = std::array::from_fn(|k| table[base[k] + r[k] as usize]);
                mismatches += (argmax_row(&ours) != best) as u64;
                points += 1;
            }
        }
    }
    GridOutcome { value_triples: n * n * n, max_value_err: max_err, argmax_points: points, argmax_mismatches: mismatches }
}
