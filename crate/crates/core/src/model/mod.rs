//! The inception-residual network family and its MLP head.
//!
//! A backbone of one Inception Block and three Inc-Res Blocks feeds a
//! Pooling Block and a small fully connected classifier. Channel widths
//! come from [`ArchConfig`]; the four named variants follow the
//! channel-reduction plan (baseline, Red01, Red02, Red03).

mod blocks;
mod network;
mod spec;

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::tensor::io::WeightsError;
use crate::tensor::TensorError;

pub use network::{build_network, embedding_classifier, Network};
pub use spec::{count_parameters, LayerDesc, NetworkSpec};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("architecture config mismatch: {0}")]
    ConfigMismatch(String),
    #[error("unknown variant '{0}' (expected baseline, red01, red02, red03)")]
    UnknownVariant(String),
    #[error("input shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("weights not loaded")]
    WeightsNotLoaded,
    #[error("weight file: {0}")]
    Weights(#[from] WeightsError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

pub type Result<T> = std::result::Result<T, ModelError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    Baseline,
    Red01,
    Red02,
    Red03,
    Custom,
}

impl Variant {
    pub const NAMED: [Variant; 4] = [Variant::Baseline, Variant::Red01, Variant::Red02, Variant::Red03];

    /// Published trainable-parameter total for the named variants.
    pub fn target_params(self) -> Option<f64> {
        match self {
            Variant::Baseline => Some(9.6e6),
            Variant::Red01 => Some(3.2e6),
            Variant::Red02 => Some(0.8e6),
            Variant::Red03 => Some(0.2e6),
            Variant::Custom => None,
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Baseline => "baseline",
            Variant::Red01 => "red01",
            Variant::Red02 => "red02",
            Variant::Red03 => "red03",
            Variant::Custom => "custom",
        })
    }
}

impl FromStr for Variant {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "baseline" => Ok(Variant::Baseline),
            "red01" => Ok(Variant::Red01),
            "red02" => Ok(Variant::Red02),
            "red03" => Ok(Variant::Red03),
            "custom" => Ok(Variant::Custom),
            _ => Err(ModelError::UnknownVariant(s.to_string())),
        }
    }
}

/// How the Pooling Block turns the final `[F, T, C]` map into features.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoolingLayout {
    /// Three `C`-length descriptors: mean over (F, T); max over T then mean
    /// over F; mean over F then max over T.
    ChannelDescriptors,
    /// Flattened maps: mean over C (`F·T`), max over T (`F·C`), mean over
    /// F (`T·C`).
    FlattenedMaps,
}

impl PoolingLayout {
    pub fn feature_dim(self, f: usize, t: usize, c: usize) -> usize {
        match self {
            PoolingLayout::ChannelDescriptors => 3 * c,
            PoolingLayout::FlattenedMaps => f * t + f * c + t * c,
        }
    }
}

/// Network variant descriptor.
#[derive(Debug, Clone, PartialEq)]
pub struct ArchConfig {
    pub variant: Variant,
    /// Per-sample input `[F, T, C]`.
    pub input: [usize; 3],
    /// Widths of the stacked Inc01 units in the Inception Block.
    pub inception_channels: Vec<usize>,
    /// Widths of the stacked Inc02 units, one list per Inc-Res Block.
    pub incres_channels: Vec<Vec<usize>>,
    /// Kernel size `K` per Inc-Res Block.
    pub incres_k: Vec<usize>,
    pub head_hidden: Option<usize>,
    pub n_classes: usize,
    pub dropout_fc: f64,
    /// Dropout after each block's max pooling.
    pub dropout_block: f64,
    pub rn_lambda: f64,
    pub bn_eps: f64,
    pub bn_momentum: f64,
    pub pooling: PoolingLayout,
}

impl ArchConfig {
    fn with_plan(variant: Variant, inception: Vec<usize>, incres: Vec<Vec<usize>>, hidden: Option<usize>) -> Self {
        Self {
            variant,
            input: [128, 256, 3],
            inception_channels: inception,
            incres_channels: incres,
            incres_k: vec![3, 3, 3],
            head_hidden: hidden,
            n_classes: 10,
            dropout_fc: 0.2,
            dropout_block: 0.1,
            rn_lambda: 0.4,
            bn_eps: 1e-3,
            bn_momentum: 0.99,
            pooling: PoolingLayout::ChannelDescriptors,
        }
    }

    pub fn baseline() -> Self {
        Self::with_plan(
            Variant::Baseline,
            vec![64, 64],
            vec![vec![128, 128], vec![256, 256], vec![512, 512]],
            Some(1024),
        )
    }

    /// Single-unit blocks at `[w, 2w, 4w, 8w]` with no hidden FC layer.
    fn reduced(variant: Variant, w: usize) -> Self {
        Self::with_plan(variant, vec![w], vec![vec![2 * w], vec![4 * w], vec![8 * w]], None)
    }

    pub fn red01() -> Self {
        Self::reduced(Variant::Red01, 64)
    }

    pub fn red02() -> Self {
        Self::reduced(Variant::Red02, 32)
    }

    pub fn red03() -> Self {
        Self::reduced(Variant::Red03, 16)
    }

    pub fn from_variant(variant: Variant) -> Result<Self> {
        match variant {
            Variant::Baseline => Ok(Self::baseline()),
            Variant::Red01 => Ok(Self::red01()),
            Variant::Red02 => Ok(Self::red02()),
            Variant::Red03 => Ok(Self::red03()),
            Variant::Custom => Err(ModelError::UnknownVariant("custom has no preset".into())),
        }
    }

    /// Output width of each of the four backbone blocks.
    pub fn channel_plan(&self) -> Vec<usize> {
        let mut plan = vec![*self.inception_channels.last().unwrap_or(&0)];
        plan.extend(self.incres_channels.iter().map(|b| *b.last().unwrap_or(&0)));
        plan
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(ModelError::ConfigMismatch(m.to_string()));
        if self.incres_channels.len() != 3 || self.incres_k.len() != 3 {
            return bad("exactly three Inc-Res blocks (channels and K) are required");
        }
        if self.inception_channels.is_empty() || self.incres_channels.iter().any(|b| b.is_empty()) {
            return bad("every block needs at least one unit");
        }
        if self.inception_channels.iter().chain(self.incres_channels.iter().flatten()).any(|&c| c < 3) {
            return bad("unit widths must be at least 3");
        }
        if self.incres_k.iter().any(|&k| k == 0) {
            return bad("kernel sizes must be positive");
        }
        if self.n_classes < 2 {
            return bad("at least two classes are required");
        }
        if self.input.iter().any(|&d| d == 0) {
            return bad("input dims must be positive");
        }
        for p in [self.dropout_fc, self.dropout_block] {
            if !(0.0..1.0).contains(&p) {
                return bad("dropout ratios must lie in [0, 1)");
            }
        }
        if !(0.0..1.0).contains(&self.bn_momentum) {
            return bad("batch-norm momentum must lie in [0, 1)");
        }
        if let Some(h) = self.head_hidden {
            if h == 0 {
                return bad("hidden width must be positive");
            }
        }
        if self.variant != Variant::Custom {
            let preset = Self::from_variant(self.variant)?;
            if self.inception_channels != preset.inception_channels
                || self.incres_channels != preset.incres_channels
                || self.head_hidden != preset.head_hidden
            {
                return bad("named variant does not match its channel plan; use variant 'custom'");
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reduction_plans() {
        assert_eq!(ArchConfig::baseline().channel_plan(), vec![64, 128, 256, 512]);
        assert_eq!(ArchConfig::red01().channel_plan(), vec![64, 128, 256, 512]);
        assert_eq!(ArchConfig::red02().channel_plan(), vec![32, 64, 128, 256]);
        assert_eq!(ArchConfig::red03().channel_plan(), vec![16, 32, 64, 128]);
        assert_eq!(ArchConfig::baseline().incres_channels.iter().map(|b| b[0]).collect::<Vec<_>>(), vec![128, 256, 512]);
        assert!(ArchConfig::red01().head_hidden.is_none());
    }

    #[test]
    fn variant_parsing() {
        assert_eq!("RED02".parse::<Variant>().unwrap(), Variant::Red02);
        assert!(matches!("red04".parse::<Variant>(), Err(ModelError::UnknownVariant(_))));
    }

    #[test]
    fn validation_catches_bad_configs() {
        let mut a = ArchConfig::red03();
        a.incres_k.pop();
        assert!(a.validate().is_err());
        let mut a = ArchConfig::red03();
        a.inception_channels = vec![20];
        assert!(a.validate().is_err());
        a.variant = Variant::Custom;
        assert!(a.validate().is_ok());
    }
}
