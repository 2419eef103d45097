//! Weight persistence: a JSON manifest naming every tensor and its shape,
//! next to a flat little-endian `f32` file holding the tensors in manifest
//! order.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::Params;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub kind: String,
    pub config: serde_json::Value,
    pub frozen: bool,
    pub weights: String,
    pub tensors: Vec<TensorEntry>,
}

pub fn write_f32_file(path: &Path, values: &[f32]) -> Result<()> {
    let mut bytes = Vec::with_capacity(values.len() * 4);
    for v in values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_f32_file(path: &Path) -> Result<Vec<f32>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() % 4 != 0 {
        return Err(Error::MalformedMetadata(format!(
            "{} has {} bytes, not a multiple of 4",
            path.display(),
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

fn weights_path(manifest_path: &Path, weights: &str) -> PathBuf {
    manifest_path
        .parent()
        .map(|p| p.join(weights))
        .unwrap_or_else(|| PathBuf::from(weights))
}

/// Writes `<stem>.json` (manifest) and `<stem>.bin` (weights).
pub fn save_params<P, C>(manifest_path: &Path, kind: &str, config: &C, frozen: bool, model: &P) -> Result<()>
where
    P: Params<f32>,
    C: Serialize,
{
    let stem = manifest_path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("model");
    let weights = format!("{stem}.bin");
    let tensors = model.params();
    let manifest = Manifest {
        kind: kind.to_string(),
        config: serde_json::to_value(config).map_err(|e| Error::json(manifest_path, e))?,
        frozen,
        weights: weights.clone(),
        tensors: tensors
            .iter()
            .map(|t| TensorEntry {
                name: t.name.clone(),
                shape: t.shape.clone(),
            })
            .collect(),
    };
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::json(manifest_path, e))?;
    fs::write(manifest_path, text).map_err(|e| Error::io(manifest_path, e))?;
    let flat: Vec<f32> = tensors.iter().flat_map(|t| t.data.iter().copied()).collect();
    write_f32_file(&weights_path(manifest_path, &weights), &flat)
}

/// Reads a manifest and returns it together with the flat weights.
pub fn load_params(manifest_path: &Path) -> Result<(Manifest, Vec<f32>)> {
    let text = fs::read_to_string(manifest_path).map_err(|e| Error::io(manifest_path, e))?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| Error::json(manifest_path, e))?;
    let data = read_f32_file(&weights_path(manifest_path, &manifest.weights))?;
    let expected: usize = manifest
        .tensors
        .iter()
        .map(|t| t.shape.iter().product::<usize>())
        .sum();
    if expected != data.len() {
        return Err(Error::dim("weight file", expected, data.len()));
    }
    Ok((manifest, data))
}

/// Copies flat weights into `model`, checking names and shapes against the
/// manifest.
pub(crate) fn fill_params<P: Params<f32>>(model: &mut P, manifest: &Manifest, data: &[f32]) -> Result<()> {
    {
        let layout = model.params();
        if layout.len() != manifest.tensors.len() {
            return Err(Error::ShapeMismatch(format!(
                "manifest lists {} tensors, model has {}",
                manifest.tensors.len(),
                layout.len()
            )));
        }
        for (t, e) in layout.iter().zip(&manifest.tensors) {
            if t.name != e.name || t.shape != e.shape {
                return Err(Error::ShapeMismatch(format!(
                    "tensor {} {:?} does not match manifest entry {} {:?}",
                    t.name, t.shape, e.name, e.shape
                )));
            }
        }
    }
    let mut offset = 0;
    for slot in model.params_mut() {
        let n = slot.len();
        slot.copy_from_slice(&data[offset..offset + n]);
        offset += n;
    }
    Ok(())
}
