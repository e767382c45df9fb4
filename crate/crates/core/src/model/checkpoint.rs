//! On-disk checkpoints.
//!
//! ```text
//! manifest.json   config, training step, named tensors with shapes
//! params.f32      tensors concatenated in manifest order, little-endian f32
//! adam_m.f32      first optimizer moments (optional, same layout)
//! adam_v.f32      second optimizer moments (optional, same layout)
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::params::{Layout, ModelParams};
use super::ModelConfig;
use crate::error::{Error, Result};
use crate::storage;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const PARAMS_FILE: &str = "params.f32";
const ADAM_M_FILE: &str = "adam_m.f32";
const ADAM_V_FILE: &str = "adam_v.f32";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub config: ModelConfig,
    pub step: usize,
    pub tensors: Vec<TensorEntry>,
    pub has_optimizer_state: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: ModelParams<f32>,
    pub step: usize,
    /// Adam first and second moments, when saved.
    pub moments: Option<(Vec<f32>, Vec<f32>)>,
}

pub fn save_checkpoint(ckpt: &Checkpoint, dir: &Path) -> Result<()> {
    storage::ensure_dir(dir)?;
    let layout = &ckpt.params.layout;
    let manifest = CheckpointManifest {
        config: ckpt.params.config.clone(),
        step: ckpt.step,
        tensors: layout
            .tensors
            .iter()
            .map(|t| TensorEntry {
                name: t.name.clone(),
                shape: t.shape.clone(),
            })
            .collect(),
        has_optimizer_state: ckpt.moments.is_some(),
    };
    storage::write_f32_le(&dir.join(PARAMS_FILE), ckpt.params.data.iter().copied())?;
    if let Some((m, v)) = &ckpt.moments {
        if m.len() != layout.total || v.len() != layout.total {
            return Err(Error::Shape {
                expected: layout.total,
                actual: m.len().min(v.len()),
            });
        }
        storage::write_f32_le(&dir.join(ADAM_M_FILE), m.iter().copied())?;
        storage::write_f32_le(&dir.join(ADAM_V_FILE), v.iter().copied())?;
    }
    // Manifest last so a partially written checkpoint is never picked up.
    storage::write_json(&dir.join(MANIFEST_FILE), &manifest)
}

pub fn load_checkpoint(dir: &Path) -> Result<Checkpoint> {
    let manifest_path = dir.join(MANIFEST_FILE);
    let manifest: CheckpointManifest = storage::read_json(&manifest_path)?;
    let layout = Layout::new(&manifest.config);
    let expected: Vec<TensorEntry> = layout
        .tensors
        .iter()
        .map(|t| TensorEntry {
            name: t.name.clone(),
            shape: t.shape.clone(),
        })
        .collect();
    if manifest.tensors != expected {
        return Err(Error::format(
            &manifest_path,
            "tensor table does not match the configuration",
        ));
    }
    let params_path = dir.join(PARAMS_FILE);
    let data = storage::read_f32_le(&params_path)?;
    if data.len() != layout.total {
        return Err(Error::format(
            &params_path,
            format!("expected {} values, found {}", layout.total, data.len()),
        ));
    }
    let params = ModelParams::from_data(manifest.config, data)?;
    let moments = if manifest.has_optimizer_state {
        let m = storage::read_f32_le(&dir.join(ADAM_M_FILE))?;
        let v = storage::read_f32_le(&dir.join(ADAM_V_FILE))?;
        if m.len() != layout.total || v.len() != layout.total {
            return Err(Error::format(
                dir,
                "optimizer state does not match the parameters",
            ));
        }
        Some((m, v))
    } else {
        None
    };
    Ok(Checkpoint {
        params,
        step: manifest.step,
        moments,
    })
}
