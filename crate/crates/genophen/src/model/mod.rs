//! The prediction network: a genome CNN with positional codes, a weather
//! CNN, per-SNP cross-attention over the weather sequence, soil and
//! management MLPs, and a fusion head.

pub mod forward;
pub mod params;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::WEATHER_STEPS;

pub use forward::{
    cross_attention, genome_forward, model_forward, weather_forward, Forward, Mode, ModelBatch,
};
pub use params::{config_hash, Checkpoint, ModelParams, PipelineState};

/// Ablation variants named after what they remove.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Full,
    /// Skip the genome/weather cross-attention residual.
    NoGe,
    /// Drop the genome branch entirely.
    NoG,
}

impl Variant {
    pub fn label(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::NoGe => "no_ge",
            Variant::NoG => "no_g",
        }
    }

    pub fn parse(s: &str) -> Result<Variant> {
        match s {
            "full" => Ok(Variant::Full),
            "no_ge" => Ok(Variant::NoGe),
            "no_g" => Ok(Variant::NoG),
            other => Err(Error::Config(format!(
                "unknown variant {other:?}; expected full, no_ge or no_g"
            ))),
        }
    }
}

fn default_kernel_lengths() -> Vec<usize> {
    vec![2, 3, 4]
}

fn default_weather_conv() -> Vec<usize> {
    vec![32, 64]
}

fn default_soil_dims() -> Vec<usize> {
    vec![32, 16]
}

fn default_mgmt_dims() -> Vec<usize> {
    vec![16, 8]
}

fn default_fusion_dims() -> Vec<usize> {
    vec![128, 32]
}

fn default_snp_count() -> usize {
    100
}

fn default_context_width() -> usize {
    2
}

fn default_filters() -> usize {
    16
}

fn default_weather_kernel() -> usize {
    3
}

fn default_weather_steps() -> usize {
    WEATHER_STEPS
}

fn default_soil_features() -> usize {
    crate::ingest::SOIL_FEATURES
}

fn default_mgmt_features() -> usize {
    crate::ingest::MANAGEMENT_FEATURES
}

fn default_dropout() -> f64 {
    0.2
}

/// Architecture hyperparameters. The defaults give a SNP embedding of
/// dimension 48 (16 filters for each of the kernel lengths 2, 3 and 4)
/// and a weather embedding of dimension 64.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    /// Modeling SNP count S.
    pub snp_count: usize,
    /// Flank half-width w; contexts are 2w+1 bases.
    pub context_width: usize,
    pub kernel_lengths: Vec<usize>,
    /// Filters per kernel length; the SNP embedding dimension is
    /// `filters * kernel_lengths.len()`.
    pub filters: usize,
    /// Output channels of the stacked weather convolutions.
    pub weather_conv: Vec<usize>,
    pub weather_kernel: usize,
    /// Weather sequence length fed to the network (43 for real data).
    pub weather_steps: usize,
    pub soil_features: usize,
    pub mgmt_features: usize,
    pub soil_dims: Vec<usize>,
    pub mgmt_dims: Vec<usize>,
    /// Hidden widths of the fusion head; a final scalar layer is implicit.
    pub fusion_dims: Vec<usize>,
    pub dropout: f64,
    /// Ablation flags; `no_g` supersedes `no_ge`.
    pub no_ge: bool,
    pub no_g: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            snp_count: default_snp_count(),
            context_width: default_context_width(),
            kernel_lengths: default_kernel_lengths(),
            filters: default_filters(),
            weather_conv: default_weather_conv(),
            weather_kernel: default_weather_kernel(),
            weather_steps: default_weather_steps(),
            soil_features: default_soil_features(),
            mgmt_features: default_mgmt_features(),
            soil_dims: default_soil_dims(),
            mgmt_dims: default_mgmt_dims(),
            fusion_dims: default_fusion_dims(),
            dropout: default_dropout(),
            no_ge: false,
            no_g: false,
        }
    }
}

impl ModelConfig {
    /// SNP embedding dimension d (also the positional-code dimension).
    pub fn embed_dim(&self) -> usize {
        self.filters * self.kernel_lengths.len()
    }

    /// Weather embedding dimension d_w.
    pub fn weather_embed_dim(&self) -> usize {
        *self.weather_conv.last().expect("validated non-empty")
    }

    /// Context columns per SNP.
    pub fn context_cols(&self) -> usize {
        2 * self.context_width + 1
    }

    /// Weather sequence length after the valid convolution stack.
    pub fn weather_seq_len(&self) -> usize {
        self.weather_steps - self.weather_conv.len() * (self.weather_kernel - 1)
    }

    pub fn variant(&self) -> Variant {
        if self.no_g {
            Variant::NoG
        } else if self.no_ge {
            Variant::NoGe
        } else {
            Variant::Full
        }
    }

    pub fn with_variant(mut self, variant: Variant) -> Self {
        self.no_ge = variant == Variant::NoGe;
        self.no_g = variant == Variant::NoG;
        self
    }

    /// Width of the concatenated fusion input.
    pub fn fusion_input_dim(&self) -> usize {
        let genome = if self.no_g { 0 } else { self.embed_dim() };
        genome
            + self.weather_embed_dim()
            + *self.soil_dims.last().expect("validated non-empty")
            + *self.mgmt_dims.last().expect("validated non-empty")
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("snp_count", self.snp_count),
            ("filters", self.filters),
            ("weather_kernel", self.weather_kernel),
            ("weather_steps", self.weather_steps),
            ("soil_features", self.soil_features),
            ("mgmt_features", self.mgmt_features),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        for (name, dims) in [
            ("kernel_lengths", &self.kernel_lengths),
            ("weather_conv", &self.weather_conv),
            ("soil_dims", &self.soil_dims),
            ("mgmt_dims", &self.mgmt_dims),
            ("fusion_dims", &self.fusion_dims),
        ] {
            if dims.is_empty() || dims.iter().any(|&d| d == 0) {
                return Err(Error::Config(format!("{name} must be non-empty and positive")));
            }
        }
        if self.embed_dim() % 2 != 0 {
            return Err(Error::Config(format!(
                "SNP embedding dimension {} must be even for the positional code",
                self.embed_dim()
            )));
        }
        let cols = self.context_cols();
        if let Some(&k) = self.kernel_lengths.iter().find(|&&k| k > cols) {
            return Err(Error::Config(format!(
                "kernel length {k} exceeds context width {cols}"
            )));
        }
        if self.weather_seq_len() < 1
            || self.weather_steps <= self.weather_conv.len() * (self.weather_kernel - 1)
        {
            return Err(Error::Config(
                "weather convolution stack consumes the whole sequence".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} not in [0,1)", self.dropout)));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_dimensions() {
        let cfg = ModelConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.embed_dim(), 48);
        assert_eq!(cfg.weather_embed_dim(), 64);
        assert_eq!(cfg.weather_seq_len(), 39);
        assert_eq!(cfg.fusion_input_dim(), 48 + 64 + 16 + 8);
    }

    #[test]
    fn validation_catches_bad_configs() {
        let mut cfg = ModelConfig::default();
        cfg.filters = 0;
        assert!(cfg.validate().is_err());

        let mut cfg = ModelConfig::default();
        cfg.kernel_lengths = vec![2, 3, 9];
        assert!(cfg.validate().is_err(), "kernel longer than context");

        let mut cfg = ModelConfig::default();
        cfg.filters = 5;
        cfg.kernel_lengths = vec![2, 3, 4];
        assert!(cfg.validate().is_err(), "odd embedding dimension");

        let mut cfg = ModelConfig::default();
        cfg.weather_steps = 4;
        assert!(cfg.validate().is_err(), "conv stack eats the sequence");

        let mut cfg = ModelConfig::default();
        cfg.dropout = 1.0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn variant_labels() {
        assert_eq!(Variant::parse("no_ge").unwrap(), Variant::NoGe);
        assert!(Variant::parse("nope").is_err());
        let cfg = ModelConfig::default().with_variant(Variant::NoG);
        assert_eq!(cfg.variant().label(), "no_g");
        assert!(cfg.fusion_input_dim() < ModelConfig::default().fusion_input_dim());
    }
}
