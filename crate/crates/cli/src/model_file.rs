//! JSON representation of a trained classifier.

use std::path::Path;

use serde::{Deserialize, Serialize};

use cbp_core::postproc::LinearModel;
use cbp_core::Matrix;

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub classes: usize,
    pub dim: usize,
    pub lambda: f64,
    /// One row per class.
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
}

impl From<&LinearModel> for ModelFile {
    fn from(m: &LinearModel) -> Self {
        Self {
            classes: m.k(),
            dim: m.dim(),
            lambda: m.lambda(),
            weights: (0..m.k()).map(|j| m.weights().row(j).to_vec()).collect(),
            bias: m.bias().to_vec(),
        }
    }
}

impl ModelFile {
    pub fn into_model(self) -> Result<LinearModel, CliError> {
        if self.weights.len() != self.classes || self.weights.iter().any(|r| r.len() != self.dim) {
            return Err(CliError::Invalid(
                "model weights do not match classes x dim".into(),
            ));
        }
        let weights = Matrix::new(self.classes, self.dim, self.weights.concat())?;
        Ok(LinearModel::new(weights, self.bias, self.lambda)?)
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(self).expect("plain data serializes");
        std::fs::write(path, text).map_err(|source| CliError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))
    }
}
