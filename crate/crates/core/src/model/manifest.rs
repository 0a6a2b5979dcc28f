//! Line-delimited JSON manifest: one record per generated robot.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::{ModelError, RobotModel};
use crate::dataset::{extract_params, param_layout};

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub version: u32,
    pub id: u64,
    pub seed: u64,
    /// Raw ground-truth parameters in layout order, keyed by name.
    pub params: Vec<(String, f64)>,
}

impl ManifestRecord {
    pub fn from_model(model: &RobotModel) -> Result<Self, ModelError> {
        let values = extract_params(model).map_err(|e| ModelError::Manifest(e.to_string()))?;
        Ok(Self {
            version: MANIFEST_VERSION,
            id: model.id,
            seed: model.generation_seed,
            params: param_layout()
                .iter()
                .map(|p| p.name())
                .zip(values)
                .collect(),
        })
    }

    pub fn values(&self) -> Vec<f64> {
        self.params.iter().map(|(_, v)| *v).collect()
    }
}

pub fn write_manifest<W: Write>(mut out: W, records: &[ManifestRecord]) -> std::io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

pub fn read_manifest<R: BufRead>(input: R) -> Result<Vec<ManifestRecord>, ModelError> {
    let names: Vec<String> = param_layout().iter().map(|p| p.name()).collect();
    let mut records = Vec::new();
    for (lineno, line) in input.lines().enumerate() {
        let line = line.map_err(|e| ModelError::Manifest(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: ManifestRecord = serde_json::from_str(&line)
            .map_err(|e| ModelError::Manifest(format!("line {}: {e}", lineno + 1)))?;
        if record.version != MANIFEST_VERSION {
            return Err(ModelError::Manifest(format!(
                "line {}: manifest version {} (expected {MANIFEST_VERSION})",
                lineno + 1,
                record.version
            )));
        }
        let record_names = record.params.iter().map(|(n, _)| n);
        if !record_names.eq(names.iter()) {
            return Err(ModelError::Manifest(format!(
                "line {}: parameter layout mismatch",
                lineno + 1
            )));
        }
        records.push(record);
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{generate_fleet, KinematicTemplate, VariationRanges};

    #[test]
    fn manifest_round_trip() {
        let fleet =
            generate_fleet(4, 9, &KinematicTemplate::default(), &VariationRanges::default()).unwrap();
        let records: Vec<_> = fleet.iter().map(|m| ManifestRecord::from_model(m).unwrap()).collect();
        let mut buf = Vec::new();
        write_manifest(&mut buf, &records).unwrap();
        assert_eq!(buf.iter().filter(|&&b| b == b'\n').count(), 4);
        let back = read_manifest(buf.as_slice()).unwrap();
        assert_eq!(back, records);
    }

    #[test]
    fn version_mismatch_is_rejected() {
        let line = r#"{"version":99,"id":0,"seed":0,"params":[]}"#;
        assert!(read_manifest(line.as_bytes()).is_err());
    }
}
