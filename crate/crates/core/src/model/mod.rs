//! Block-causal transformer over tokenized condition/QoI/query functions.

mod checkpoint;
mod mask;
mod params;
pub mod real;
mod transformer;

pub use checkpoint::{
    load_checkpoint, save_checkpoint, Checkpoint, CheckpointManifest, TensorEntry, MANIFEST_FILE,
    PARAMS_FILE,
};
pub use mask::{attention_mask, AttentionPlan, Mask};
pub use params::{init_params, LayerOffsets, Layout, ModelParams, TensorSpec};
pub use real::Real;
pub use transformer::{
    backward, forward, forward_cached, input_features, predict, ForwardCache, ModelInput,
    Prediction,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub layers: usize,
    pub heads: usize,
    pub d_model: usize,
    /// Total width of the query/key/value projections across heads.
    pub d_attn: usize,
    pub d_ff: usize,
    /// Pairs per training sequence (`I`); bounds the pair-index embedding table.
    pub max_pairs: usize,
    /// Keep every `grid_stride`-th cell when tokenizing a function.
    pub grid_stride: usize,
    /// Number of Fourier harmonics of the key fed to the input map.
    pub key_frequencies: usize,
}

impl ModelConfig {
    pub fn paper() -> Self {
        ModelConfig {
            layers: 6,
            heads: 8,
            d_model: 256,
            d_attn: 256,
            d_ff: 1024,
            max_pairs: 6,
            grid_stride: 1,
            key_frequencies: 8,
        }
    }

    pub fn desk() -> Self {
        ModelConfig {
            layers: 2,
            heads: 4,
            d_model: 64,
            d_attn: 64,
            d_ff: 256,
            max_pairs: 4,
            grid_stride: 2,
            key_frequencies: 8,
        }
    }

    /// Input features: key, key harmonics, value, role one-hot.
    pub fn d_in(&self) -> usize {
        2 + 2 * self.key_frequencies + 3
    }

    pub fn head_dim(&self) -> usize {
        self.d_attn / self.heads
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("layers", self.layers),
            ("heads", self.heads),
            ("d_model", self.d_model),
            ("d_attn", self.d_attn),
            ("d_ff", self.d_ff),
            ("max_pairs", self.max_pairs),
            ("grid_stride", self.grid_stride),
        ];
        if let Some((name, _)) = dims.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!(
                "model dimension {name} must be positive"
            )));
        }
        if !self.d_attn.is_multiple_of(self.heads) {
            return Err(Error::Config(format!(
                "attention width {} is not divisible by {} heads",
                self.d_attn, self.heads
            )));
        }
        Ok(())
    }
}
