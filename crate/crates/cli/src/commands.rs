use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use ascnet::audio::{load_wav, resample_to_32k, segment_10s};
use ascnet::frontend::{read_cache, CacheHeader, CacheWriter, Frontend, FrontendKind};
use ascnet::fusion::{fuse_systems, SystemPredictions};
use ascnet::model::{build_network, ArchConfig, Variant};
use ascnet::synth::{make_dataset, parse_manifest, Split};
use ascnet::train::{fit, predict_dataset, write_history, Dataset, InputNorm};
use clap::{Args, Parser, Subcommand};

use crate::config::RunConfig;
use crate::error::CliError;

type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "ascnet", version, about = "Acoustic scene classification: features, training, evaluation and PROD fusion")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone, Default)]
pub struct Common {
    /// Config file with `key = value` lines.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Override one config key; repeatable. Applied after --config.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Seed for every random choice; overrides the config.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Do not echo the resolved config to stderr.
    #[arg(long)]
    pub quiet: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic device-mismatched corpus (WAVs + manifest.csv).
    Synth {
        #[command(flatten)]
        common: Common,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Extract features for the clips of a manifest into an ASCF cache.
    Features {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        manifest: PathBuf,
        /// logmel, cqt or gam.
        #[arg(long)]
        frontend: Option<String>,
        /// train, eval or all.
        #[arg(long, default_value = "all")]
        split: String,
        /// Output cache file; sample ids go to `<out>.ids`.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a network on a feature cache.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        features: PathBuf,
        /// baseline, red01, red02, red03 or custom.
        #[arg(long)]
        variant: Option<String>,
        /// Output directory for weights.ascw, history.csv and config.resolved.
        #[arg(long)]
        out: PathBuf,
    },
    /// Predict a feature cache and report per-device accuracy.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        weights: PathBuf,
        #[arg(long)]
        variant: Option<String>,
        /// Prediction CSV to write.
        #[arg(long)]
        out: PathBuf,
        /// Text report path; printed to stdout either way.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// PROD-fuse prediction CSVs and report per-device accuracy.
    Fuse {
        /// Prediction CSVs, one per system.
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        /// Text report path.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Machine-readable report path.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Print the layer table and parameter count of a variant.
    Params {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        variant: Option<String>,
        /// Emit CSV rows instead of the aligned table.
        #[arg(long)]
        csv: bool,
    },
}

fn resolve(common: &Common, variant: Option<&str>, frontend: Option<&str>) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    for kv in &common.set {
        cfg.set_assignment(kv)?;
    }
    if let Some(v) = variant {
        cfg.set("variant", v)?;
    }
    if let Some(f) = frontend {
        cfg.set("frontend", f)?;
    }
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    if !common.quiet {
        for line in cfg.to_text().lines() {
            eprintln!("# {line}");
        }
    }
    Ok(cfg)
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    Ok(BufWriter::new(File::create(path).map_err(|e| io_err(path, e))?))
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth { common, out } => cmd_synth(&common, &out),
        Command::Features { common, manifest, frontend, split, out } => {
            cmd_features(&common, &manifest, frontend.as_deref(), &split, &out)
        }
        Command::Train { common, features, variant, out } => cmd_train(&common, &features, variant.as_deref(), &out),
        Command::Eval { common, features, weights, variant, out, report } => {
            cmd_eval(&common, &features, &weights, variant.as_deref(), &out, report.as_deref())
        }
        Command::Fuse { inputs, out, csv } => cmd_fuse(&inputs, out.as_deref(), csv.as_deref()),
        Command::Params { common, variant, csv } => cmd_params(&common, variant.as_deref(), csv),
    }
}

pub fn cmd_synth(common: &Common, out: &Path) -> Result<()> {
    let cfg = resolve(common, None, None)?;
    let rows = make_dataset(out, &cfg.synth())?;
    std::fs::write(out.join("config.resolved"), cfg.to_text()).map_err(|e| io_err(out, e))?;
    let train = rows.iter().filter(|r| r.split == Split::Train).count();
    println!("wrote {} clips ({train} train, {} eval) to {}", rows.len(), rows.len() - train, out.display());
    Ok(())
}

pub fn cmd_features(common: &Common, manifest: &Path, frontend: Option<&str>, split: &str, out: &Path) -> Result<()> {
    let cfg = resolve(common, None, frontend)?;
    let keep = |s: Split| match split {
        "all" => Ok(true),
        "train" => Ok(s == Split::Train),
        "eval" => Ok(s == Split::Eval),
        other => Err(CliError::Config(format!("--split must be train, eval or all, got '{other}'"))),
    };
    let text = std::fs::read_to_string(manifest).map_err(|e| io_err(manifest, e))?;
    let rows = parse_manifest(&text).map_err(|e| CliError::Validation(e.to_string()))?;
    let root = manifest.parent().unwrap_or(Path::new("."));
    let fe = Frontend::new(cfg.frontend)?;
    let header = CacheHeader { frontend: cfg.frontend, f: ascnet::frontend::N_BANDS, t: ascnet::frontend::TARGET_FRAMES, c: 3 };
    let mut writer = CacheWriter::new(create(out)?, header).map_err(|e| io_err(out, e))?;
    let mut ids = String::new();
    let mut n = 0;
    for row in &rows {
        if !keep(row.split)? {
            continue;
        }
        let path = root.join(&row.path);
        let clip = load_wav(&path).map_err(|e| match CliError::from(e) {
            CliError::Io(m) => io_err(&path, m),
            other => CliError::Validation(format!("{}: {}", path.display(), other.message())),
        })?;
        let clip = resample_to_32k(&clip);
        for (k, seg) in segment_10s(&clip)?.iter().enumerate() {
            let feat = fe.extract(seg)?;
            writer.write_record(row.scene_label, &row.device_id, &feat)?;
            ids.push_str(&format!("{}#{k}\n", row.path));
            n += 1;
        }
    }
    writer.finish().and_then(|mut w| w.flush()).map_err(|e| io_err(out, e))?;
    let ids_path = ids_path(out);
    std::fs::write(&ids_path, ids).map_err(|e| io_err(&ids_path, e))?;
    println!("wrote {n} {} records to {}", cfg.frontend, out.display());
    Ok(())
}

fn ids_path(cache: &Path) -> PathBuf {
    let mut s = cache.as_os_str().to_owned();
    s.push(".ids");
    PathBuf::from(s)
}

fn load_dataset(path: &Path, n_classes: usize) -> Result<(FrontendKind, Dataset, Vec<String>)> {
    let (header, records) = read_cache(path)?;
    let data = Dataset::from_records(&records, n_classes)?;
    let ids = match std::fs::read_to_string(ids_path(path)) {
        Ok(text) => text.lines().map(String::from).collect::<Vec<_>>(),
        Err(_) => (0..data.len()).map(|i| format!("{i:06}")).collect(),
    };
    if ids.len() != data.len() {
        return Err(CliError::Validation(format!("{} ids for {} records in {}", ids.len(), data.len(), path.display())));
    }
    Ok((header.frontend, data, ids))
}

fn network_for(cfg: &RunConfig, data: &Dataset) -> Result<ascnet::model::Network> {
    let [f, _, c] = data.dims;
    let arch: ArchConfig = cfg.arch([f, cfg.augment.crop_width, c])?;
    Ok(build_network(&arch)?)
}

pub fn cmd_train(common: &Common, features: &Path, variant: Option<&str>, out: &Path) -> Result<()> {
    let cfg = resolve(common, variant, None)?;
    let (_, mut data, _) = load_dataset(features, cfg.n_classes)?;
    let mut net = network_for(&cfg, &data)?;
    std::fs::create_dir_all(out).map_err(|e| io_err(out, e))?;
    if cfg.standardize {
        let norm = InputNorm::fit(&data)?;
        norm.apply(&mut data)?;
        let npath = out.join(NORM_FILE);
        std::fs::write(&npath, norm.to_csv()).map_err(|e| io_err(&npath, e))?;
    }
    let mut tc = cfg.train_config();
    if tc.checkpoint_every.is_some() {
        tc.checkpoint_dir = Some(out.join("checkpoints"));
    }
    let report = fit(&mut net, &data, &tc, &cfg.augment, |h| {
        eprintln!("epoch {:>3} phase {} lr {:e} loss {:.5} acc {:.4}", h.epoch, h.phase, h.lr, h.loss, h.train_acc)
    })?;
    let wpath = out.join("weights.ascw");
    let mut w = create(&wpath)?;
    net.save_weights(&mut w).and_then(|_| w.flush()).map_err(|e| io_err(&wpath, e))?;
    let hpath = out.join("history.csv");
    write_history(&hpath, &report.history).map_err(|e| io_err(&hpath, e))?;
    std::fs::write(out.join("config.resolved"), cfg.to_text()).map_err(|e| io_err(out, e))?;
    println!("trained {} for {} steps; weights in {}", net.name(), report.steps, wpath.display());
    Ok(())
}

/// Written by `train` next to the weights when `standardize` is on.
pub const NORM_FILE: &str = "input_norm.csv";

/// Normalization saved beside `weights`, or one directory up for checkpoints.
fn load_norm(weights: &Path) -> Result<InputNorm> {
    let dir = weights.parent().unwrap_or(Path::new("."));
    let candidates = [dir.join(NORM_FILE), dir.parent().unwrap_or(dir).join(NORM_FILE)];
    let path = candidates
        .iter()
        .find(|p| p.exists())
        .ok_or_else(|| CliError::Io(format!("{}: not found (train with standardize = true writes it)", candidates[0].display())))?;
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    InputNorm::from_csv(&text).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
}

pub fn cmd_eval(
    common: &Common,
    features: &Path,
    weights: &Path,
    variant: Option<&str>,
    out: &Path,
    report_path: Option<&Path>,
) -> Result<()> {
    let cfg = resolve(common, variant, None)?;
    let (_, mut data, ids) = load_dataset(features, cfg.n_classes)?;
    if cfg.standardize {
        load_norm(weights)?.apply(&mut data)?;
    }
    let mut net = network_for(&cfg, &data)?;
    let f = File::open(weights).map_err(|e| io_err(weights, e))?;
    net.load_weights(std::io::BufReader::new(f))?;
    let probs = predict_dataset(&net, &data)?;
    let m = cfg.n_classes;
    let mut rows = Vec::with_capacity(probs.len());
    for r in probs.chunks(m) {
        let s: f64 = r.iter().map(|&v| v as f64).sum();
        rows.extend(r.iter().map(|&v| v as f64 / s));
    }
    let name = out.file_stem().map_or_else(|| "system".into(), |s| s.to_string_lossy().into_owned());
    let preds = SystemPredictions {
        name,
        sample_ids: ids,
        devices: data.devices.clone(),
        truth: data.labels.clone(),
        probs: rows,
        n_classes: m,
    };
    let mut w = create(out)?;
    w.write_all(preds.to_csv().as_bytes()).and_then(|_| w.flush()).map_err(|e| io_err(out, e))?;
    // Report from the written file so that fusing it alone reproduces this.
    let reread = SystemPredictions::read(out)?;
    emit_report(&[reread], report_path, None)
}

fn emit_report(systems: &[SystemPredictions], out: Option<&Path>, csv: Option<&Path>) -> Result<()> {
    let (_, report) = fuse_systems(systems)?;
    let title = format!("systems: {}", systems.iter().map(|s| s.name.as_str()).collect::<Vec<_>>().join(", "));
    let text = report.to_text(&title);
    print!("{text}");
    if let Some(p) = out {
        let mut w = create(p)?;
        w.write_all(text.as_bytes()).and_then(|_| w.flush()).map_err(|e| io_err(p, e))?;
    }
    if let Some(p) = csv {
        let mut w = create(p)?;
        w.write_all(report.to_csv().as_bytes()).and_then(|_| w.flush()).map_err(|e| io_err(p, e))?;
    }
    Ok(())
}

pub fn cmd_fuse(inputs: &[PathBuf], out: Option<&Path>, csv: Option<&Path>) -> Result<()> {
    let systems = inputs
        .iter()
        .map(|p| {
            SystemPredictions::read(p).map_err(|e| match CliError::from(e) {
                CliError::Io(m) => io_err(p, m),
                other => CliError::Validation(format!("{}: {}", p.display(), other.message())),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    emit_report(&systems, out, csv)
}

pub fn cmd_params(common: &Common, variant: Option<&str>, csv: bool) -> Result<()> {
    let cfg = resolve(&Common { quiet: true, ..common.clone() }, variant, None)?;
    let arch = cfg.arch([128, cfg.augment.crop_width, 3])?;
    let net = build_network(&arch)?;
    let spec = net.spec();
    if csv {
        print!("{}", spec.csv_rows());
        return Ok(());
    }
    print!("{}", spec.summary());
    if let Some(target) = Variant::target_params(arch.variant) {
        let dev = 100.0 * (spec.total_params as f64 / target - 1.0);
        println!("published budget: {:.1}M ({dev:+.1}%)", target / 1e6);
    }
    Ok(())
}
