//! JSON model container.
//!
//! ```text
//! {
//!   "format": "dap-model",
//!   "format_version": 1,
//!   "seed": 1,
//!   "config": { "input_size": 50, "hidden_size": 64, ... , "feature_schema": "..." },
//!   "matrices": [ { "name": "layer0.fwd.w_i", "rows": 64, "cols": 50, "values": [...] }, ... ]
//! }
//! ```
//!
//! Values are written in shortest round-trip form and parsed with correct
//! rounding, so a save/load cycle is bit-exact.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ModelParameters, NetworkConfig};
use crate::error::{Error, Result};

pub const MODEL_FORMAT_VERSION: u32 = 1;
const MODEL_FORMAT: &str = "dap-model";

#[derive(Serialize, Deserialize)]
struct MatrixRecord {
    name: String,
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    format_version: u32,
    seed: u64,
    config: NetworkConfig,
    matrices: Vec<MatrixRecord>,
}

pub fn save_model(m: &ModelParameters, path: impl AsRef<Path>) -> Result<()> {
    m.validate()?;
    let file = ModelFile {
        format: MODEL_FORMAT.to_string(),
        format_version: MODEL_FORMAT_VERSION,
        seed: m.seed,
        config: m.config.clone(),
        matrices: m
            .named_matrices()
            .into_iter()
            .map(|(name, x)| MatrixRecord {
                name,
                rows: x.rows(),
                cols: x.cols(),
                values: x.as_slice().to_vec(),
            })
            .collect(),
    };
    let text = serde_json::to_string(&file).map_err(|e| Error::Validation(e.to_string()))?;
    let mut out = fs::File::create(path.as_ref())?;
    out.write_all(text.as_bytes())?;
    out.write_all(b"\n")?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<ModelParameters> {
    let path = path.as_ref();
    let corrupt = |reason: String| Error::Corrupt {
        path: path.to_path_buf(),
        reason,
    };
    let text = fs::read_to_string(path)?;
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| corrupt(e.to_string()))?;
    if value.get("format").and_then(|v| v.as_str()) != Some(MODEL_FORMAT) {
        return Err(corrupt("not a model file (missing or wrong `format`)".into()));
    }
    let version = value
        .get("format_version")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| corrupt("missing `format_version`".into()))?;
    if version != MODEL_FORMAT_VERSION as u64 {
        return Err(Error::VersionMismatch {
            found: version.min(u32::MAX as u64) as u32,
            expected: MODEL_FORMAT_VERSION,
        });
    }
    let file: ModelFile = serde_json::from_value(value).map_err(|e| corrupt(e.to_string()))?;
    file.config
        .validate()
        .map_err(|e| Error::Validation(e.to_string()))?;

    let mut model = ModelParameters::zeros(file.config)?;
    model.seed = file.seed;
    let expected: Vec<(String, (usize, usize))> = model
        .named_matrices()
        .into_iter()
        .map(|(n, m)| (n, m.shape()))
        .collect();
    if file.matrices.len() != expected.len() {
        return Err(Error::Validation(format!(
            "file holds {} matrices, configuration needs {}",
            file.matrices.len(),
            expected.len()
        )));
    }
    for ((name, shape), (slot, rec)) in expected
        .iter()
        .zip(model.matrices_mut().into_iter().zip(&file.matrices))
    {
        if &rec.name != name {
            return Err(Error::Validation(format!("expected matrix `{name}`, found `{}`", rec.name)));
        }
        if (rec.rows, rec.cols) != *shape {
            return Err(Error::Validation(format!(
                "matrix `{name}` is {}x{}, configuration needs {}x{}",
                rec.rows, rec.cols, shape.0, shape.1
            )));
        }
        if rec.values.len() != rec.rows * rec.cols {
            return Err(corrupt(format!(
                "matrix `{name}` declares {}x{} but holds {} values",
                rec.rows,
                rec.cols,
                rec.values.len()
            )));
        }
        for (i, &v) in rec.values.iter().enumerate() {
            slot.set_flat(i, v).map_err(|_| corrupt(format!("non-finite value in `{name}`")))?;
        }
    }
    model.validate()?;
    Ok(model)
}
