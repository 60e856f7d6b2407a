//! PROD late fusion and per-device accuracy reports.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum FusionError {
    #[error("length mismatch: {0}")]
    LengthMismatch(String),
    #[error("invalid probabilities: {0}")]
    InvalidProbabilities(String),
    #[error("prediction file: {0}")]
    Parse(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, FusionError>;

pub const PROB_FLOOR: f64 = 1e-12;

/// Device rows in report order; unknown tags follow alphabetically.
pub const DEVICE_ORDER: [&str; 9] = ["A", "B", "C", "S1", "S2", "S3", "S4", "S5", "S6"];

/// One system's predictions, as stored in a prediction CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemPredictions {
    pub name: String,
    pub sample_ids: Vec<String>,
    pub devices: Vec<String>,
    pub truth: Vec<u8>,
    /// `N × M`, row-major.
    pub probs: Vec<f64>,
    pub n_classes: usize,
}

impl SystemPredictions {
    pub fn len(&self) -> usize {
        self.sample_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sample_ids.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.probs[i * self.n_classes..(i + 1) * self.n_classes]
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("sample_id,device_id,true_label");
        for k in 0..self.n_classes {
            let _ = write!(s, ",p_{k}");
        }
        s.push('\n');
        for i in 0..self.len() {
            let _ = write!(s, "{},{},{}", self.sample_ids[i], self.devices[i], self.truth[i]);
            for p in self.row(i) {
                let _ = write!(s, ",{p:.9e}");
            }
            s.push('\n');
        }
        s
    }

    pub fn from_csv(name: &str, text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header: Vec<&str> = lines.next().ok_or_else(|| FusionError::Parse("empty file".into()))?.split(',').collect();
        if header.len() < 5 || header[..3] != ["sample_id", "device_id", "true_label"] {
            return Err(FusionError::Parse("header must be sample_id,device_id,true_label,p_0,...".into()));
        }
        let m = header.len() - 3;
        for (k, h) in header[3..].iter().enumerate() {
            if *h != format!("p_{k}") {
                return Err(FusionError::Parse(format!("expected column p_{k}, found '{h}'")));
            }
        }
        let mut out = SystemPredictions {
            name: name.to_string(),
            sample_ids: Vec::new(),
            devices: Vec::new(),
            truth: Vec::new(),
            probs: Vec::new(),
            n_classes: m,
        };
        for (i, line) in lines.enumerate() {
            let f: Vec<&str> = line.split(',').collect();
            let bad = |what: &str| FusionError::Parse(format!("row {}: {what}", i + 1));
            if f.len() != m + 3 {
                return Err(bad(&format!("{} fields, expected {}", f.len(), m + 3)));
            }
            out.sample_ids.push(f[0].to_string());
            out.devices.push(f[1].to_string());
            out.truth.push(f[2].trim().parse().map_err(|_| bad("bad true_label"))?);
            for v in &f[3..] {
                out.probs.push(v.trim().parse().map_err(|_| bad("bad probability"))?);
            }
        }
        out.validate()?;
        Ok(out)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let p = path.as_ref();
        let name = p.file_stem().map_or_else(|| "system".into(), |s| s.to_string_lossy().into_owned());
        Self::from_csv(&name, &std::fs::read_to_string(p)?)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        Ok(std::fs::write(path, self.to_csv())?)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.len();
        if self.devices.len() != n || self.truth.len() != n || self.probs.len() != n * self.n_classes {
            return Err(FusionError::LengthMismatch(format!("system '{}' has ragged columns", self.name)));
        }
        check_rows(&self.probs, self.n_classes)
    }
}

fn check_rows(probs: &[f64], m: usize) -> Result<()> {
    for (i, row) in probs.chunks(m).enumerate() {
        if row.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
            return Err(FusionError::InvalidProbabilities(format!("row {i} has an entry outside [0, 1]")));
        }
        let s: f64 = row.iter().sum();
        if (s - 1.0).abs() > 1e-6 {
            return Err(FusionError::InvalidProbabilities(format!("row {i} sums to {s}")));
        }
    }
    Ok(())
}

/// `S × N × M` probabilities for one aligned set of samples.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbMatrix {
    pub probs: Vec<f64>,
    pub system_names: Vec<String>,
    pub sample_ids: Vec<String>,
    pub n_classes: usize,
}

impl ProbMatrix {
    pub fn new(probs: Vec<f64>, system_names: Vec<String>, sample_ids: Vec<String>, n_classes: usize) -> Result<Self> {
        let (s, n) = (system_names.len(), sample_ids.len());
        if s == 0 || n_classes == 0 {
            return Err(FusionError::LengthMismatch("need at least one system and one class".into()));
        }
        if probs.len() != s * n * n_classes {
            return Err(FusionError::LengthMismatch(format!("{} values for {s}×{n}×{n_classes}", probs.len())));
        }
        check_rows(&probs, n_classes)?;
        Ok(Self { probs, system_names, sample_ids, n_classes })
    }

    /// Aligns systems on the first one's sample order. Every system must
    /// cover exactly the same sample ids.
    pub fn from_systems(systems: &[SystemPredictions]) -> Result<Self> {
        let first = systems.first().ok_or_else(|| FusionError::LengthMismatch("no systems".into()))?;
        let m = first.n_classes;
        let mut probs = Vec::with_capacity(systems.len() * first.probs.len());
        for sys in systems {
            sys.validate()?;
            if sys.n_classes != m {
                return Err(FusionError::LengthMismatch(format!("'{}' has {} classes, expected {m}", sys.name, sys.n_classes)));
            }
            let index: HashMap<&str, usize> = sys.sample_ids.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
            if index.len() != sys.len() {
                return Err(FusionError::LengthMismatch(format!("'{}' repeats a sample id", sys.name)));
            }
            if sys.len() != first.len() {
                return Err(FusionError::LengthMismatch(format!(
                    "'{}' has {} samples, '{}' has {}",
                    sys.name,
                    sys.len(),
                    first.name,
                    first.len()
                )));
            }
            for id in &first.sample_ids {
                let i = *index.get(id.as_str()).ok_or_else(|| {
                    FusionError::LengthMismatch(format!("sample '{id}' missing from '{}'", sys.name))
                })?;
                probs.extend_from_slice(sys.row(i));
            }
        }
        Self::new(probs, systems.iter().map(|s| s.name.clone()).collect(), first.sample_ids.clone(), m)
    }

    pub fn n_systems(&self) -> usize {
        self.system_names.len()
    }

    pub fn n_samples(&self) -> usize {
        self.sample_ids.len()
    }

    pub fn row(&self, s: usize, n: usize) -> &[f64] {
        let m = self.n_classes;
        let start = (s * self.n_samples() + n) * m;
        &self.probs[start..start + m]
    }
}

/// `(1/S) ∏_s p_s` per sample and class, via a sum of floored logs.
pub fn prod_fusion(pm: &ProbMatrix) -> Vec<f64> {
    prod_fusion_with_floor(pm, PROB_FLOOR)
}

pub fn prod_fusion_with_floor(pm: &ProbMatrix, floor: f64) -> Vec<f64> {
    let (s, n, m) = (pm.n_systems(), pm.n_samples(), pm.n_classes);
    let mut out = vec![0.0; n * m];
    if s == 1 {
        out.copy_from_slice(&pm.probs);
        return out;
    }
    for i in 0..n {
        for k in 0..m {
            let log_sum: f64 = (0..s).map(|j| pm.row(j, i)[k].max(floor).ln()).sum();
            out[i * m + k] = log_sum.exp() / s as f64;
        }
    }
    out
}

/// Relative gap below which two fused scores count as tied. Log-space
/// rounding makes exact rational ties differ in the last bits.
pub const TIE_RTOL: f64 = 1e-9;

/// Argmax of one row, lowest index on ties.
pub fn argmax_row(row: &[f64]) -> usize {
    let mut best = 0;
    for (k, &v) in row.iter().enumerate() {
        if v > row[best] * (1.0 + TIE_RTOL) {
            best = k;
        }
    }
    best
}

/// Row argmax, lowest index on ties.
pub fn predict_label(fused: &[f64], n_classes: usize) -> Vec<usize> {
    fused.chunks(n_classes).map(argmax_row).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    /// `(device, accuracy %)` in report order.
    pub per_device_acc: Vec<(String, f64)>,
    /// Unweighted mean of the device rows.
    pub average_acc: f64,
    /// `confusion[true][pred]`.
    pub confusion: Vec<Vec<u64>>,
}

fn device_rank(d: &str) -> (usize, String) {
    (DEVICE_ORDER.iter().position(|&x| x == d).unwrap_or(DEVICE_ORDER.len()), d.to_string())
}

pub fn accuracy_by_device(preds: &[usize], truth: &[u8], devices: &[String], n_classes: usize) -> Result<EvalReport> {
    if preds.len() != truth.len() || preds.len() != devices.len() {
        return Err(FusionError::LengthMismatch(format!(
            "{} predictions, {} labels, {} device tags",
            preds.len(),
            truth.len(),
            devices.len()
        )));
    }
    if preds.is_empty() {
        return Err(FusionError::LengthMismatch("no samples".into()));
    }
    let mut confusion = vec![vec![0u64; n_classes]; n_classes];
    let mut tally: BTreeMap<(usize, String), (usize, usize)> = BTreeMap::new();
    for ((&p, &t), d) in preds.iter().zip(truth).zip(devices) {
        if p >= n_classes || t as usize >= n_classes {
            return Err(FusionError::LengthMismatch(format!("label outside 0..{n_classes}")));
        }
        confusion[t as usize][p] += 1;
        let e = tally.entry(device_rank(d)).or_default();
        e.0 += (p == t as usize) as usize;
        e.1 += 1;
    }
    let per_device_acc: Vec<(String, f64)> =
        tally.into_iter().map(|((_, d), (ok, n))| (d, 100.0 * ok as f64 / n as f64)).collect();
    let average_acc = per_device_acc.iter().map(|r| r.1).sum::<f64>() / per_device_acc.len() as f64;
    Ok(EvalReport { per_device_acc, average_acc, confusion })
}

pub fn fuse_and_eval(pm: &ProbMatrix, truth: &[u8], devices: &[String]) -> Result<EvalReport> {
    if truth.len() != pm.n_samples() {
        return Err(FusionError::LengthMismatch(format!("{} labels for {} samples", truth.len(), pm.n_samples())));
    }
    let labels = predict_label(&prod_fusion(pm), pm.n_classes);
    accuracy_by_device(&labels, truth, devices, pm.n_classes)
}

/// Fuses prediction files; labels and devices come from the first one
/// and must agree across files.
pub fn fuse_systems(systems: &[SystemPredictions]) -> Result<(ProbMatrix, EvalReport)> {
    let pm = ProbMatrix::from_systems(systems)?;
    let first = &systems[0];
    for sys in &systems[1..] {
        let index: HashMap<&str, usize> = sys.sample_ids.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
        for (i, id) in first.sample_ids.iter().enumerate() {
            let j = index[id.as_str()];
            if sys.truth[j] != first.truth[i] || sys.devices[j] != first.devices[i] {
                return Err(FusionError::LengthMismatch(format!("'{}' disagrees on label or device of '{id}'", sys.name)));
            }
        }
    }
    let report = fuse_and_eval(&pm, &first.truth, &first.devices)?;
    Ok((pm, report))
}

impl EvalReport {
    pub fn to_text(&self, title: &str) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{title}");
        let _ = writeln!(s, "{:<10}{:>10}", "Device", "Acc.(%)");
        for (d, a) in &self.per_device_acc {
            let _ = writeln!(s, "{d:<10}{a:>10.2}");
        }
        let _ = writeln!(s, "{:<10}{:>10.2}", "Average", self.average_acc);
        s
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("device,accuracy\n");
        for (d, a) in &self.per_device_acc {
            let _ = writeln!(s, "{d},{a:.4}");
        }
        let _ = writeln!(s, "Average,{:.4}", self.average_acc);
        s
    }

    pub fn confusion_csv(&self) -> String {
        let mut s = String::from("true\\pred");
        for k in 0..self.confusion.len() {
            let _ = write!(s, ",{k}");
        }
        s.push('\n');
        for (t, row) in self.confusion.iter().enumerate() {
            let _ = write!(s, "{t}");
            for c in row {
                let _ = write!(s, ",{c}");
            }
            s.push('\n');
        }
        s
    }

    pub fn accuracy_of(&self, device: &str) -> Option<f64> {
        self.per_device_acc.iter().find(|r| r.0 == device).map(|r| r.1)
    }
}
