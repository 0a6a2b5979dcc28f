//! Checkpoint layout (little-endian): magic, version, header length, JSON
//! header (config, tensor layout, scaler, target names), then the flat
//! parameter vector as `f64`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{EncoderConfig, EncoderModel, EstimatorError, ParamLayout, Scaler};

const MAGIC: &[u8; 8] = b"DYNIDENC";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    config: EncoderConfig,
    layout: ParamLayout,
    scaler: Scaler,
    target_names: Vec<String>,
}

pub fn save_checkpoint(path: &Path, model: &EncoderModel, target_names: &[String]) -> Result<(), EstimatorError> {
    let header = Header {
        config: model.config.clone(),
        layout: model.layout.clone(),
        scaler: model.scaler.clone(),
        target_names: target_names.to_vec(),
    };
    let header = serde_json::to_vec(&header).map_err(|e| EstimatorError::Checkpoint(e.to_string()))?;
    let mut buf = Vec::with_capacity(24 + header.len() + 8 * model.params.len());
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(header.len() as u64).to_le_bytes());
    buf.extend_from_slice(&header);
    for p in &model.params {
        buf.extend_from_slice(&p.to_le_bytes());
    }
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let tmp = path.with_extension(format!("tmp{}", std::process::id()));
    fs::write(&tmp, &buf)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<(EncoderModel, Vec<String>), EstimatorError> {
    let data = fs::read(path)?;
    let bad = |m: &str| EstimatorError::Checkpoint(m.into());
    if data.len() < 20 || &data[..8] != MAGIC {
        return Err(bad("not a checkpoint file"));
    }
    let version = u32::from_le_bytes(data[8..12].try_into().expect("4 bytes"));
    if version != CHECKPOINT_VERSION {
        return Err(EstimatorError::Checkpoint(format!("unsupported version {version}")));
    }
    let hlen = u64::from_le_bytes(data[12..20].try_into().expect("8 bytes")) as usize;
    let body = data.get(20..).ok_or_else(|| bad("truncated"))?;
    if body.len() < hlen {
        return Err(bad("truncated header"));
    }
    let header: Header = serde_json::from_slice(&body[..hlen]).map_err(|e| EstimatorError::Checkpoint(e.to_string()))?;
    let raw = &body[hlen..];
    if raw.len() != 8 * header.layout.total {
        return Err(bad("parameter block size does not match layout"));
    }
    let params: Vec<f64> = raw
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    let model = EncoderModel::from_parts(header.config, params, header.scaler)?;
    if model.layout != header.layout {
        return Err(bad("stored layout differs from the configuration"));
    }
    Ok((model, header.target_names))
}
