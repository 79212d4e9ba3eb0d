//! Architectural hyperparameters and presets.

use serde::{Deserialize, Serialize};

use crate::data::CHARSET_SIZE;
use crate::error::{Error, Result};
use crate::nn::BackboneConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// No semantic fusion module; two loss branches; decode from s2, s3 or
    /// their probability vote.
    Basic,
    /// With the semantic fusion module and a third loss branch.
    Full,
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Variant::Basic => "basic",
            Variant::Full => "full",
        })
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "basic" => Ok(Variant::Basic),
            "full" => Ok(Variant::Full),
            other => Err(Error::Config(format!("unknown variant {other:?} (want basic|full)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// Feature dimension shared by every transformer module.
    pub d: usize,
    pub num_heads: usize,
    pub layers_v: usize,
    pub layers_i: usize,
    /// Depth of the semantic fusion module (full variant only).
    pub layers_s: usize,
    /// Maximum character length: number of semantic slots.
    pub t: usize,
    pub charset_size: usize,
    pub variant: Variant,
    pub backbone: BackboneConfig,
    /// One affine head serving both the s2 and s3 branches (they live in
    /// the same semantic space under the shared alignment).
    pub share_classifier_heads: bool,
    pub ffn_dim: usize,
    pub dropout: f64,
}

impl ModelConfig {
    /// Full-scale preset: d=512, 8 heads, 3 transformer layers per module,
    /// t=25, 38 classes, the 1/2/5/3-block backbone.
    pub fn full_preset(variant: Variant) -> Self {
        ModelConfig {
            d: 512,
            num_heads: 8,
            layers_v: 3,
            layers_i: 3,
            layers_s: 3,
            t: 25,
            charset_size: CHARSET_SIZE,
            variant,
            backbone: BackboneConfig::full(),
            share_classifier_heads: true,
            ffn_dim: 2048,
            dropout: 0.1,
        }
    }

    /// Desk-scale training preset: d=64, one layer per module, t=8.
    pub fn toy(variant: Variant) -> Self {
        ModelConfig {
            d: 64,
            num_heads: 4,
            layers_v: 1,
            layers_i: 1,
            layers_s: 1,
            t: 8,
            charset_size: CHARSET_SIZE,
            variant,
            backbone: BackboneConfig::toy(64),
            share_classifier_heads: true,
            ffn_dim: 256,
            dropout: 0.0,
        }
    }

    /// Minimal configuration for gradient-check oracles: d=8, 2 heads,
    /// t=4; a 16×24 image yields n=12 visual tokens.
    pub fn tiny(variant: Variant) -> Self {
        ModelConfig {
            d: 8,
            num_heads: 2,
            layers_v: 1,
            layers_i: 1,
            layers_s: 1,
            t: 4,
            charset_size: CHARSET_SIZE,
            variant,
            backbone: BackboneConfig::toy(8),
            share_classifier_heads: true,
            ffn_dim: 16,
            dropout: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.d % self.num_heads != 0 {
            return Err(Error::Config(format!(
                "model dim {} must be a positive multiple of {} heads",
                self.d, self.num_heads
            )));
        }
        if self.t == 0 {
            return Err(Error::Config("t must be positive".into()));
        }
        // the captured interaction attention feeds visualization and decode
        if self.layers_i == 0 {
            return Err(Error::Config("the interaction module needs at least one layer".into()));
        }
        if self.charset_size < 2 {
            return Err(Error::Config("charset needs at least two classes".into()));
        }
        if self.backbone.out_dim != self.d {
            return Err(Error::Config(format!(
                "backbone output dim {} must equal model dim {}",
                self.backbone.out_dim, self.d
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        self.backbone.validate()
    }
}
