//! Per-stem binary purity head: forward pass, training, metrics and checkpoints.

mod head;
mod metrics;
mod train;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use head::{bce_with_logit, decide, grad_check, sigmoid, Dense, HeadParams};
pub use metrics::{f1_score, EvalReport};
pub use train::{evaluate, train_head, EpochLog, Sample, TrainConfig, TrainOutcome};

pub const CHECKPOINT_VERSION: u32 = 1;

/// A trained head together with the encoder it was trained against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub stem: String,
    pub backend: String,
    pub seed: u64,
    #[serde(flatten)]
    pub head: HeadParams,
}

impl Checkpoint {
    pub fn new(stem: impl Into<String>, backend: impl Into<String>, seed: u64, head: HeadParams) -> Self {
        Checkpoint { format_version: CHECKPOINT_VERSION, stem: stem.into(), backend: backend.into(), seed, head }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_vec_pretty(self)?;
        std::fs::write(path, json).map_err(|e| Error::from(e).at_path(path))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::from(e).at_path(path))?;
        let ck: Checkpoint = serde_json::from_slice(&bytes).map_err(|e| Error::from(e).at_path(path))?;
        if ck.format_version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "{}: format version {} is not supported",
                path.display(),
                ck.format_version
            )));
        }
        ck.head.validate()?;
        Ok(ck)
    }

    /// Confirms the head was trained on embeddings from `backend` of width `dim`.
    pub fn check_backend(&self, backend: &str, dim: usize) -> Result<()> {
        if self.backend != backend {
            return Err(Error::Checkpoint(format!(
                "head for {} was trained with backend {:?}, not {backend:?}",
                self.stem, self.backend
            )));
        }
        if self.head.dim != dim {
            return Err(Error::Dimension { expected: self.head.dim, actual: dim });
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON encoding.
    pub fn fingerprint(&self) -> String {
        use sha2::{Digest, Sha256};
        let json = serde_json::to_vec(self).unwrap_or_default();
        hex::encode(Sha256::digest(&json))
    }
}
