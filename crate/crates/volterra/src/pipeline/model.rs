//! Fitted-model export: coefficients, ridge weight, kernel parameters, and a
//! content hash of the training windows so predictions can verify they run
//! against the data the model was fit on.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::kernel::GramKernel;
use crate::regression::RidgeModel;
use crate::sequence::Window;

/// SHA-256 over the window contents (width, channels, and rows as little
/// endian doubles), hex encoded.
pub fn fingerprint_windows(windows: &[Window]) -> String {
    let mut hasher = Sha256::new();
    hasher.update((windows.len() as u64).to_le_bytes());
    for window in windows {
        hasher.update((window.width() as u64).to_le_bytes());
        hasher.update((window.channels() as u64).to_le_bytes());
        for i in 0..window.width() {
            for value in window.row(i) {
                hasher.update(value.to_le_bytes());
            }
        }
    }
    hex::encode(hasher.finalize())
}

/// Serializable model document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelExport {
    pub alpha: Vec<f64>,
    pub ridge: f64,
    pub kernel: GramKernel,
    pub training_fingerprint: String,
}

impl ModelExport {
    pub fn from_model(model: &RidgeModel, training_windows: &[Window]) -> ModelExport {
        ModelExport {
            alpha: model.alpha().to_vec(),
            ridge: model.ridge(),
            kernel: *model.kernel(),
            training_fingerprint: fingerprint_windows(training_windows),
        }
    }

    pub fn to_model(&self) -> Result<RidgeModel> {
        RidgeModel::from_parts(self.alpha.clone(), self.ridge, self.kernel)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)
            .map_err(|e| Error::Config(format!("cannot serialize model: {e}")))?;
        std::fs::write(path, json).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<ModelExport> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("cannot parse model {}: {e}", path.display())))
    }

    /// Errors unless the given training windows hash to the stored
    /// fingerprint.
    pub fn verify_windows(&self, windows: &[Window]) -> Result<()> {
        let actual = fingerprint_windows(windows);
        if actual != self.training_fingerprint {
            return Err(Error::Config(format!(
                "training windows do not match the model fingerprint \
                 (expected {}, got {actual})",
                self.training_fingerprint
            )));
        }
        Ok(())
    }
}
