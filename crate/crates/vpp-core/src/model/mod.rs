//! A small self-contained grounding model: patch encoder over the
//! prompt-overlaid image, a query-based local feature extractor, two
//! projector MLPs, feature fusion, and a causal decoder trained by
//! next-token likelihood over textual coordinates. Everything runs in
//! double precision on a reverse-mode tape so gradients can be verified by
//! finite differences.

pub mod checkpoint;
pub mod gradcheck;
pub mod net;
pub mod params;
pub mod tape;
pub mod train;
pub mod vocab;

use serde::{Deserialize, Serialize};

use crate::axis::AxisSpec;
use crate::overlay::OverlayConfig;
use crate::raster::{PadFill, PreprocessConfig};
use crate::{Error, Result};

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use gradcheck::{grad_check, GradCheckReport};
pub use net::{FeatureMap, Model};
pub use params::{GroupId, ModelParams, ParamGroup, ParamTensor, GROUP_NAMES};
pub use train::{
    examples_from_pairs, train, vocab_from_examples, TrainExample, TrainSchedule, TrainStats,
};
pub use vocab::Vocab;

/// How global and local features are merged before the decoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fusion {
    /// Row-wise concatenation (the default).
    Concat,
    /// Cross-attention with local features as the query.
    CrossAttnLpQ,
    /// Cross-attention with global features as the query.
    CrossAttnGpQ,
}

impl Fusion {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "concat" => Ok(Fusion::Concat),
            "xattn-lq" | "cross_attn_lp_q" => Ok(Fusion::CrossAttnLpQ),
            "xattn-gq" | "cross_attn_gp_q" => Ok(Fusion::CrossAttnGpQ),
            other => Err(Error::contract(format!(
                "unknown fusion mode {other:?}; expected concat, xattn-lq or xattn-gq"
            ))),
        }
    }
}

/// Model hyperparameters. Defaults are desk-scale; everything is
/// config-reachable for larger runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub image_side: usize,
    pub patch: usize,
    pub dim: usize,
    pub encoder_layers: usize,
    pub decoder_layers: usize,
    pub heads: usize,
    pub k_queries: usize,
    pub fusion: Fusion,
    pub overlay: OverlayConfig,
    /// Component switches for ablations. With the global path off (or alpha
    /// exactly 1) the overlay node is skipped entirely, so such models are
    /// bit-identical to prompt-free ones.
    pub use_global: bool,
    pub use_local: bool,
    pub axis: AxisSpec,
    pub channel_mean: [f64; 3],
    pub channel_std: [f64; 3],
    /// Capacity of the text positional table.
    pub max_text_len: usize,
    pub seed: u64,
    /// Per-group learning rates in [`GROUP_NAMES`] order.
    pub group_lr: [f64; 6],
    /// Per-group freeze flags in [`GROUP_NAMES`] order.
    pub frozen: [bool; 6],
}

/// Default mask width scaled from the 30px-at-336 convention.
pub fn scaled_mask_width(image_side: usize) -> u32 {
    ((30.0 / 336.0) * image_side as f64).round().max(1.0) as u32
}

impl Default for ModelConfig {
    fn default() -> Self {
        let image_side = 64;
        ModelConfig {
            image_side,
            patch: 8,
            dim: 64,
            encoder_layers: 2,
            decoder_layers: 2,
            heads: 4,
            k_queries: 8,
            fusion: Fusion::Concat,
            overlay: OverlayConfig {
                alpha: 0.95,
                mask_width: scaled_mask_width(image_side),
            },
            use_global: true,
            use_local: true,
            axis: AxisSpec::default(),
            channel_mean: PreprocessConfig::default().channel_mean,
            channel_std: PreprocessConfig::default().channel_std,
            max_text_len: 96,
            seed: 0,
            group_lr: [2e-3, 1e-3, 1e-3, 2e-3, 2e-3, 1e-3],
            frozen: [false; 6],
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.image_side % self.patch != 0 {
            return Err(Error::contract(format!(
                "image side {} must be divisible by patch {}",
                self.image_side, self.patch
            )));
        }
        if self.dim % self.heads != 0 {
            return Err(Error::contract(format!(
                "dim {} must be divisible by heads {}",
                self.dim, self.heads
            )));
        }
        if self.k_queries == 0 && self.use_local {
            return Err(Error::contract("local path needs at least one query".to_string()));
        }
        self.overlay.validate()?;
        self.axis.validate()?;
        if self.channel_std.iter().any(|&s| s <= 0.0) {
            return Err(Error::contract("channel std must be positive".to_string()));
        }
        Ok(())
    }

    pub fn grid(&self) -> usize {
        self.image_side / self.patch
    }

    pub fn n_patches(&self) -> usize {
        self.grid() * self.grid()
    }

    pub fn preprocess_config(&self) -> PreprocessConfig {
        PreprocessConfig {
            target_side: self.image_side,
            channel_mean: self.channel_mean,
            channel_std: self.channel_std,
            pad_fill: PadFill::Mean,
        }
    }

    /// True when the forward graph contains the prompt-overlay node.
    pub fn global_active(&self) -> bool {
        self.use_global && self.overlay.alpha < 1.0
    }
}
