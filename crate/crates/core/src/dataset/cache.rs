//! Content-addressed binary cache for built datasets.
//!
//! Layout (little-endian): magic, format version, key length and key,
//! metadata length and JSON metadata, then every train sample followed by
//! every validation sample as `robot_id u64, offset u32, window u32,
//! features f64[seq_len·n_features], target f64[n_targets]`.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{
    build_dataset, raw_feature_names, Dataset, DatasetConfig, DatasetError, FeatureMask,
    NormalizationTable, SequenceSample, PARAM_LAYOUT_VERSION,
};
use crate::control::TrajectoryLog;
use crate::model::{KinematicTemplate, ManifestRecord, MANIFEST_VERSION};

const MAGIC: &[u8; 8] = b"DYNIDSET";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CacheStatus {
    Hit,
    Miss,
}

/// SHA-256 over the configuration, layout versions, feature layout,
/// normalisation table, template, manifest and log contents.
pub fn cache_key(
    manifest: &[ManifestRecord],
    template: &KinematicTemplate,
    logs: &[TrajectoryLog],
    table: &NormalizationTable,
    cfg: &DatasetConfig,
) -> String {
    let mut h = Sha256::new();
    h.update(FORMAT_VERSION.to_le_bytes());
    h.update(MANIFEST_VERSION.to_le_bytes());
    h.update(PARAM_LAYOUT_VERSION.to_le_bytes());
    h.update(json(cfg));
    h.update(json(&raw_feature_names(template.dof(), &cfg.features)));
    h.update(json(table));
    h.update(json(template));
    h.update(json(manifest));
    for log in logs {
        h.update(log.robot_id.to_le_bytes());
        h.update(log.dt.to_le_bytes());
        h.update((log.len() as u64).to_le_bytes());
        for v in log.q.iter().chain(&log.qd).chain(&log.tau) {
            h.update(v.to_le_bytes());
        }
    }
    hex::encode(h.finalize())
}

fn json<T: Serialize + ?Sized>(v: &T) -> Vec<u8> {
    serde_json::to_vec(v).expect("plain data serialises")
}

#[derive(Serialize, Deserialize)]
struct Meta {
    config: DatasetConfig,
    mask: FeatureMask,
    target_names: Vec<String>,
    seq_len: usize,
    n_features: usize,
    n_train: usize,
    n_val: usize,
}

fn write_sample(buf: &mut Vec<u8>, s: &SequenceSample) {
    buf.extend_from_slice(&s.robot_id.to_le_bytes());
    buf.extend_from_slice(&(s.offset as u32).to_le_bytes());
    buf.extend_from_slice(&(s.window as u32).to_le_bytes());
    for v in s.features.iter().chain(&s.target) {
        buf.extend_from_slice(&v.to_le_bytes());
    }
}

/// Writes `ds` to `path` through a temporary file and an atomic rename.
pub fn save_dataset(path: &Path, ds: &Dataset) -> Result<(), DatasetError> {
    let meta = Meta {
        config: ds.config.clone(),
        mask: ds.mask.clone(),
        target_names: ds.target_names.clone(),
        seq_len: ds.seq_len,
        n_features: ds.n_features,
        n_train: ds.train.len(),
        n_val: ds.val.len(),
    };
    let meta = serde_json::to_vec(&meta).map_err(|e| DatasetError::Cache(e.to_string()))?;
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(ds.key.len() as u32).to_le_bytes());
    buf.extend_from_slice(ds.key.as_bytes());
    buf.extend_from_slice(&(meta.len() as u64).to_le_bytes());
    buf.extend_from_slice(&meta);
    for s in ds.train.iter().chain(&ds.val) {
        write_sample(&mut buf, s);
    }
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let tmp = path.with_extension(format!("tmp{}", std::process::id()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(&buf)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], DatasetError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.data.len())
            .ok_or_else(|| DatasetError::Cache("truncated cache file".into()))?;
        let s = &self.data[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, DatasetError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64, DatasetError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>, DatasetError> {
        let bytes = self.take(n.checked_mul(8).ok_or_else(|| DatasetError::Cache("size overflow".into()))?)?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }
}

pub fn load_dataset(path: &Path) -> Result<Dataset, DatasetError> {
    let data = fs::read(path)?;
    let mut r = Reader { data: &data, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(DatasetError::Cache("bad magic".into()));
    }
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(DatasetError::Cache(format!("unsupported cache version {version}")));
    }
    let key_len = r.u32()? as usize;
    let key = String::from_utf8(r.take(key_len)?.to_vec())
        .map_err(|_| DatasetError::Cache("key is not UTF-8".into()))?;
    let meta_len = r.u64()? as usize;
    let meta: Meta = serde_json::from_slice(r.take(meta_len)?)
        .map_err(|e| DatasetError::Cache(e.to_string()))?;
    let row = meta.seq_len * meta.n_features;
    let n_t = meta.target_names.len();
    let mut read = |count: usize| -> Result<Vec<SequenceSample>, DatasetError> {
        (0..count)
            .map(|_| {
                Ok(SequenceSample {
                    robot_id: r.u64()?,
                    offset: r.u32()? as usize,
                    window: r.u32()? as usize,
                    features: r.f64s(row)?,
                    target: r.f64s(n_t)?,
                })
            })
            .collect()
    };
    let train = read(meta.n_train)?;
    let val = read(meta.n_val)?;
    if r.pos != data.len() {
        return Err(DatasetError::Cache("trailing bytes".into()));
    }
    Ok(Dataset {
        key,
        config: meta.config,
        mask: meta.mask,
        target_names: meta.target_names,
        seq_len: meta.seq_len,
        n_features: meta.n_features,
        train,
        val,
    })
}

pub fn cache_path(dir: &Path, key: &str) -> PathBuf {
    dir.join(format!("dataset_{}.bin", &key[..16.min(key.len())]))
}

/// Loads the dataset for these inputs from `dir` if present, otherwise
/// builds and stores it.
pub fn build_dataset_cached(
    dir: &Path,
    manifest: &[ManifestRecord],
    template: &KinematicTemplate,
    logs: &[TrajectoryLog],
    table: &NormalizationTable,
    cfg: &DatasetConfig,
) -> Result<(Dataset, CacheStatus), DatasetError> {
    let key = cache_key(manifest, template, logs, table, cfg);
    let path = cache_path(dir, &key);
    if path.exists() {
        if let Ok(ds) = load_dataset(&path) {
            if ds.key == key {
                return Ok((ds, CacheStatus::Hit));
            }
        }
    }
    let ds = build_dataset(manifest, template, logs, table, cfg)?;
    save_dataset(&path, &ds)?;
    Ok((ds, CacheStatus::Miss))
}
