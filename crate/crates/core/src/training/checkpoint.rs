//! Checkpoints: one self-describing JSON document carrying the model,
//! the training configuration, the loss history and the seed. Parameter
//! arrays serialize as decimal strings with 17 significant digits, so a
//! reload reproduces forward outputs bit-identically.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::koopman::KoopmanModel;

use super::{Result, TrainConfig, TrainError, TrainHistory};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub model: KoopmanModel,
    pub config: TrainConfig,
    pub history: TrainHistory,
    pub seed: u64,
}

impl Checkpoint {
    pub fn new(model: KoopmanModel, config: TrainConfig, history: TrainHistory) -> Self {
        let seed = config.seed;
        Checkpoint {
            format_version: CHECKPOINT_VERSION,
            model,
            config,
            history,
            seed,
        }
    }
}

pub fn save_checkpoint(path: &Path, cp: &Checkpoint) -> Result<()> {
    let mut text = serde_json::to_string_pretty(cp).map_err(|e| TrainError::Corrupt(e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| TrainError::Io(e.to_string()))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let text = fs::read_to_string(path).map_err(|e| TrainError::Io(e.to_string()))?;

    // Check the version before insisting on the full schema.
    #[derive(Deserialize)]
    struct Probe {
        format_version: u32,
    }
    let probe: Probe =
        serde_json::from_str(&text).map_err(|e| TrainError::Corrupt(e.to_string()))?;
    if probe.format_version != CHECKPOINT_VERSION {
        return Err(TrainError::FormatVersionMismatch {
            found: probe.format_version,
            expected: CHECKPOINT_VERSION,
        });
    }
    serde_json::from_str(&text).map_err(|e| TrainError::Corrupt(e.to_string()))
}
