//! Model files: one JSON header line, then the weights as little-endian f32.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{DetectorConfig, DetectorModel, Segment};
use crate::error::{Error, Result};

pub const MODEL_FORMAT: &str = "slaction-detector";
pub const MODEL_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    config: DetectorConfig,
    param_count: usize,
    segments: Vec<Segment>,
}

pub fn write_model(model: &DetectorModel) -> Result<Vec<u8>> {
    let header = Header {
        format: MODEL_FORMAT.into(),
        version: MODEL_VERSION,
        config: model.config().clone(),
        param_count: model.param_count(),
        segments: model.segments().to_vec(),
    };
    let mut out = serde_json::to_vec(&header)?;
    out.push(b'\n');
    out.reserve(model.weights().len() * 4);
    for w in model.weights() {
        out.extend_from_slice(&w.to_le_bytes());
    }
    Ok(out)
}

pub fn read_model(bytes: &[u8]) -> Result<DetectorModel> {
    let nl = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::Format("model file has no header line".into()))?;
    let header: Header = serde_json::from_slice(&bytes[..nl])?;
    if header.format != MODEL_FORMAT {
        return Err(Error::Format(format!("unknown model format {:?}", header.format)));
    }
    if header.version != MODEL_VERSION {
        return Err(Error::Format(format!(
            "model format version {} is not supported (expected {MODEL_VERSION})",
            header.version
        )));
    }
    let blob = &bytes[nl + 1..];
    if blob.len() != header.param_count * 4 {
        return Err(Error::Format(format!(
            "weight blob holds {} bytes, header declares {} parameters",
            blob.len(),
            header.param_count
        )));
    }
    let weights: Vec<f32> = blob
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    let model = DetectorModel::from_weights(header.config, weights).map_err(|e| match e {
        Error::Shape(m) | Error::Config(m) => Error::Format(format!("model header is inconsistent: {m}")),
        other => other,
    })?;
    if model.segments() != header.segments.as_slice() {
        return Err(Error::Format("segment table does not match the configuration".into()));
    }
    Ok(model)
}

pub fn save_model(model: &DetectorModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, write_model(model)?).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<DetectorModel> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    read_model(&bytes)
}
