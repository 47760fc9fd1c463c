//! Trained-model files: `residuals.f32` (K×D little-endian binary32, row-major)
//! next to a `model.json` sidecar holding `{dim, K, tau, aggregation}`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataset::{f32_le_bytes, write_file};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::model::{Aggregation, PromptModel};

pub const MODEL_SIDECAR: &str = "model.json";
pub const RESIDUALS_FILE: &str = "residuals.f32";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSidecar {
    pub dim: usize,
    #[serde(rename = "K")]
    pub num_classes: usize,
    pub tau: f64,
    pub aggregation: Aggregation,
}

pub fn save_model(model: &PromptModel, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let sidecar = ModelSidecar {
        dim: model.dim(),
        num_classes: model.num_classes(),
        tau: model.temperature(),
        aggregation: model.aggregation(),
    };
    let mut json = serde_json::to_string_pretty(&sidecar)
        .map_err(|e| Error::ManifestInvalid(e.to_string()))?;
    json.push('\n');
    write_file(&dir.join(MODEL_SIDECAR), json.as_bytes())?;
    write_file(
        &dir.join(RESIDUALS_FILE),
        &f32_le_bytes(model.residuals().as_slice()),
    )
}

/// Loads a model from its directory or from the path of its `model.json`.
pub fn load_model(path: impl AsRef<Path>) -> Result<PromptModel> {
    let path = path.as_ref();
    let sidecar_path: PathBuf = if path.is_dir() {
        path.join(MODEL_SIDECAR)
    } else {
        path.to_path_buf()
    };
    let dir = sidecar_path.parent().unwrap_or(Path::new("."));
    let raw = fs::read(&sidecar_path).map_err(|e| Error::io(&sidecar_path, e))?;
    let sidecar: ModelSidecar = serde_json::from_slice(&raw)
        .map_err(|e| Error::ManifestInvalid(format!("{}: {e}", sidecar_path.display())))?;

    let residuals_path = dir.join(RESIDUALS_FILE);
    let bytes = fs::read(&residuals_path).map_err(|e| Error::io(&residuals_path, e))?;
    let expected = sidecar.num_classes * sidecar.dim * 4;
    if bytes.len() != expected {
        return Err(Error::BlobSizeMismatch {
            file: RESIDUALS_FILE.to_string(),
            expected,
            actual: bytes.len(),
        });
    }
    let values = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    let residuals = Matrix::from_vec(sidecar.num_classes, sidecar.dim, values)?;
    PromptModel::new(residuals, sidecar.tau, sidecar.aggregation)
        .map_err(|e| Error::ManifestInvalid(e.to_string()))
}
