//! Plain-text run configuration: `key = value` lines, `#` comments.

use std::path::Path;

use ascnet::augment::{AugmentConfig, MixupDist};
use ascnet::frontend::FrontendKind;
use ascnet::model::{ArchConfig, Variant};
use ascnet::synth::SynthConfig;
use ascnet::train::TrainConfig;

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub frontend: FrontendKind,
    pub variant: Variant,
    /// Block widths for `variant = custom`, one unit per block.
    pub custom_widths: Option<[usize; 4]>,
    pub head_hidden: Option<usize>,
    pub n_classes: usize,
    pub bn_momentum: f64,
    pub train: TrainConfig,
    pub augment: AugmentConfig,
    pub n_per_class: usize,
    pub n_eval_per_class: usize,
    pub train_devices: Vec<String>,
    pub eval_devices: Vec<String>,
    pub duration_s: f64,
    /// Standardize each feature channel with training-set statistics.
    pub standardize: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            frontend: FrontendKind::LogMel,
            variant: Variant::Red03,
            custom_widths: None,
            head_hidden: None,
            n_classes: 10,
            bn_momentum: 0.99,
            train: TrainConfig::default(),
            augment: AugmentConfig::default(),
            n_per_class: 10,
            n_eval_per_class: 5,
            train_devices: ["A", "B", "C"].map(String::from).to_vec(),
            eval_devices: ["A", "B", "C", "S1", "S2", "S3"].map(String::from).to_vec(),
            duration_s: 10.0,
            standardize: true,
        }
    }
}

fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, CliError> {
    v.parse().map_err(|_| CliError::Config(format!("bad value '{v}' for '{key}'")))
}

fn list(v: &str) -> Vec<String> {
    v.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect()
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

impl RunConfig {
    pub const KEYS: [&'static str; 31] = [
        "seed",
        "frontend",
        "variant",
        "custom_widths",
        "head_hidden",
        "n_classes",
        "bn_momentum",
        "batch_size",
        "micro_batch",
        "epochs",
        "phase1_epochs",
        "lr_phase1",
        "lr_phase2",
        "l2_lambda",
        "l2_all_params",
        "adam_beta1",
        "adam_beta2",
        "adam_eps",
        "checkpoint_every",
        "crop_width",
        "mask_len",
        "n_masks",
        "mixup_alpha",
        "mixup_dist",
        "n_per_class",
        "n_eval_per_class",
        "train_devices",
        "eval_devices",
        "duration_s",
        "augment_seed",
        "standardize",
    ];

    pub fn set(&mut self, key: &str, v: &str) -> Result<(), CliError> {
        let v = v.trim();
        match key {
            "seed" => self.seed = num(key, v)?,
            "frontend" => self.frontend = v.parse().map_err(|e: ascnet::frontend::FrontendError| CliError::Config(e.to_string()))?,
            "variant" => self.variant = v.parse().map_err(|e: ascnet::model::ModelError| CliError::Config(e.to_string()))?,
            "custom_widths" if v == "none" => self.custom_widths = None,
            "custom_widths" => {
                let w: Vec<usize> = v.split(',').map(|s| num(key, s.trim())).collect::<Result<_, _>>()?;
                let w: [usize; 4] =
                    w.try_into().map_err(|_| CliError::Config("custom_widths needs four comma-separated widths".into()))?;
                self.custom_widths = Some(w);
            }
            "head_hidden" => self.head_hidden = if v == "none" || v == "0" { None } else { Some(num(key, v)?) },
            "n_classes" => self.n_classes = num(key, v)?,
            "bn_momentum" => self.bn_momentum = num(key, v)?,
            "batch_size" => self.train.batch_size = num(key, v)?,
            "micro_batch" => self.train.micro_batch = num(key, v)?,
            "epochs" => self.train.epochs = num(key, v)?,
            "phase1_epochs" => self.train.phase1_epochs = num(key, v)?,
            "lr_phase1" => self.train.lr_phase1 = num(key, v)?,
            "lr_phase2" => self.train.lr_phase2 = num(key, v)?,
            "l2_lambda" => self.train.l2_lambda = num(key, v)?,
            "l2_all_params" => self.train.l2_all_params = num(key, v)?,
            "adam_beta1" => self.train.adam_beta1 = num(key, v)?,
            "adam_beta2" => self.train.adam_beta2 = num(key, v)?,
            "adam_eps" => self.train.adam_eps = num(key, v)?,
            "checkpoint_every" => self.train.checkpoint_every = if v == "none" { None } else { Some(num(key, v)?) },
            "crop_width" => self.augment.crop_width = num(key, v)?,
            "mask_len" => self.augment.mask_len = num(key, v)?,
            "n_masks" => self.augment.n_masks = num(key, v)?,
            "mixup_alpha" => self.augment.mixup_alpha = num(key, v)?,
            "mixup_dist" => {
                self.augment.mixup_dist = match v {
                    "beta" => MixupDist::Beta,
                    "uniform" => MixupDist::Uniform,
                    _ => return Err(CliError::Config(format!("mixup_dist must be beta or uniform, got '{v}'"))),
                }
            }
            "augment_seed" => self.augment.rng_seed = num(key, v)?,
            "n_per_class" => self.n_per_class = num(key, v)?,
            "n_eval_per_class" => self.n_eval_per_class = num(key, v)?,
            "train_devices" => self.train_devices = list(v),
            "eval_devices" => self.eval_devices = list(v),
            "duration_s" => self.duration_s = num(key, v)?,
            "standardize" => self.standardize = num(key, v)?,
            _ => return Err(CliError::Config(format!("unknown config key '{key}'"))),
        }
        Ok(())
    }

    /// `key = value` assignment as given on the command line.
    pub fn set_assignment(&mut self, kv: &str) -> Result<(), CliError> {
        let (k, v) = kv.split_once('=').ok_or_else(|| CliError::Config(format!("expected key=value, got '{kv}'")))?;
        self.set(k.trim(), v)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut cfg = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("line {}: expected 'key = value'", i + 1)))?;
            cfg.set(k.trim(), v).map_err(|e| CliError::Config(format!("line {}: {}", i + 1, e.message())))?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn get(&self, key: &str) -> String {
        let t = &self.train;
        let a = &self.augment;
        match key {
            "seed" => self.seed.to_string(),
            "frontend" => self.frontend.to_string(),
            "variant" => self.variant.to_string(),
            "custom_widths" => self.custom_widths.map_or("none".into(), |w| join(&w)),
            "head_hidden" => self.head_hidden.map_or("none".into(), |h| h.to_string()),
            "n_classes" => self.n_classes.to_string(),
            "bn_momentum" => self.bn_momentum.to_string(),
            "batch_size" => t.batch_size.to_string(),
            "micro_batch" => t.micro_batch.to_string(),
            "epochs" => t.epochs.to_string(),
            "phase1_epochs" => t.phase1_epochs.to_string(),
            "lr_phase1" => format!("{:e}", t.lr_phase1),
            "lr_phase2" => format!("{:e}", t.lr_phase2),
            "l2_lambda" => format!("{:e}", t.l2_lambda),
            "l2_all_params" => t.l2_all_params.to_string(),
            "adam_beta1" => t.adam_beta1.to_string(),
            "adam_beta2" => t.adam_beta2.to_string(),
            "adam_eps" => format!("{:e}", t.adam_eps),
            "checkpoint_every" => t.checkpoint_every.map_or("none".into(), |k| k.to_string()),
            "crop_width" => a.crop_width.to_string(),
            "mask_len" => a.mask_len.to_string(),
            "n_masks" => a.n_masks.to_string(),
            "mixup_alpha" => a.mixup_alpha.to_string(),
            "mixup_dist" => match a.mixup_dist {
                MixupDist::Beta => "beta".into(),
                MixupDist::Uniform => "uniform".into(),
            },
            "augment_seed" => a.rng_seed.to_string(),
            "n_per_class" => self.n_per_class.to_string(),
            "n_eval_per_class" => self.n_eval_per_class.to_string(),
            "train_devices" => join(&self.train_devices),
            "eval_devices" => join(&self.eval_devices),
            "duration_s" => self.duration_s.to_string(),
            "standardize" => self.standardize.to_string(),
            _ => unreachable!("unknown key {key}"),
        }
    }

    /// Every key with its resolved value; parses back to `self`.
    pub fn to_text(&self) -> String {
        Self::KEYS.iter().map(|k| format!("{k} = {}\n", self.get(k))).collect()
    }

    pub fn arch(&self, input: [usize; 3]) -> Result<ArchConfig, CliError> {
        let mut arch = match (self.variant, self.custom_widths) {
            (Variant::Custom, Some(w)) => {
                let mut a = ArchConfig::red03();
                a.variant = Variant::Custom;
                a.inception_channels = vec![w[0]];
                a.incres_channels = vec![vec![w[1]], vec![w[2]], vec![w[3]]];
                a.head_hidden = self.head_hidden;
                a
            }
            (Variant::Custom, None) => {
                return Err(CliError::Config("variant 'custom' needs custom_widths".into()));
            }
            (v, _) => ArchConfig::from_variant(v).map_err(|e| CliError::Config(e.to_string()))?,
        };
        arch.input = input;
        arch.n_classes = self.n_classes;
        arch.bn_momentum = self.bn_momentum;
        arch.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(arch)
    }

    pub fn synth(&self) -> SynthConfig {
        SynthConfig {
            n_per_class: self.n_per_class,
            n_eval_per_class: self.n_eval_per_class,
            train_devices: self.train_devices.clone(),
            eval_devices: self.eval_devices.clone(),
            seed: self.seed,
            duration_s: self.duration_s,
            n_classes: self.n_classes,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig { seed: self.seed, ..self.train.clone() }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.train_config().validate().map_err(|e| CliError::Config(e.to_string()))?;
        self.augment.validate().map_err(|e| CliError::Config(e.to_string()))?;
        if !(0.0..1.0).contains(&self.bn_momentum) {
            return Err(CliError::Config("bn_momentum must lie in [0, 1)".into()));
        }
        if self.n_classes < 2 || self.n_classes > 10 {
            return Err(CliError::Config("n_classes must be in 2..=10".into()));
        }
        Ok(())
    }
}
