//! Sequence datasets built from trajectory logs.

mod cache;
mod features;
mod params;
mod sampling;

pub use cache::{build_dataset_cached, cache_key, cache_path, load_dataset, save_dataset, CacheStatus};
pub use features::{
    column_std, enrich_features, jacobian_features, prune_constant_features, raw_feature_names,
    FeatureLayout, FeatureMask, FeatureSpec, CONSTANT_STD,
};
pub use params::{
    denormalize_targets, extract_params, normalize_targets, param_layout, NormRange,
    NormalizationTable, ParamId, ParamKind, PARAM_LAYOUT_VERSION,
};
pub use sampling::{
    count_windows, effective_time, offset_sample, offset_windows, resample_linear, utilization,
    Window,
};

use std::collections::{BTreeSet, HashMap};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::control::{EpisodeStatus, TrajectoryLog};
use crate::dynamics::RigidChain;
use crate::model::{KinematicTemplate, ManifestRecord};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("invalid dataset configuration: {0}")]
    Config(String),
    #[error("parameter `{name}` = {value} outside [{min}, {max}]")]
    OutOfRange {
        name: String,
        value: f64,
        min: f64,
        max: f64,
    },
    #[error("degenerate dataset: {0}")]
    Degenerate(String),
    #[error("log for robot {robot_id} has status {status:?}")]
    RejectedLog { robot_id: u64, status: EpisodeStatus },
    #[error("no manifest record for robot {0}")]
    MissingRecord(u64),
    #[error("empty split: {0}")]
    EmptySplit(String),
    #[error("dataset cache: {0}")]
    Cache(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub seq_len: usize,
    /// Decimation stride in raw 1 ms ticks.
    pub stride: usize,
    /// Tick step between window offsets.
    pub ssr: usize,
    #[serde(default)]
    pub features: FeatureSpec,
    /// Read frames through linear interpolation instead of direct indexing.
    #[serde(default)]
    pub interpolate: bool,
    /// Fraction of robots held out for validation.
    pub val_fraction: f64,
    pub split_seed: u64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            seq_len: 16,
            stride: 16,
            ssr: 16,
            features: FeatureSpec::default(),
            interpolate: false,
            val_fraction: 0.1,
            split_seed: 0,
        }
    }
}

impl DatasetConfig {
    pub fn validate(&self) -> Result<(), DatasetError> {
        let err = |m: String| Err(DatasetError::Config(m));
        if self.stride < 1 {
            return err("stride must be >= 1".into());
        }
        if self.ssr < 1 || self.ssr > self.stride {
            return err(format!("ssr {} must lie in [1, stride={}]", self.ssr, self.stride));
        }
        if self.stride % self.ssr != 0 {
            return err(format!("stride {} not divisible by ssr {}", self.stride, self.ssr));
        }
        if self.seq_len < 2 {
            return err("seq_len must be >= 2".into());
        }
        if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            return err(format!("val_fraction {} must lie in (0, 1)", self.val_fraction));
        }
        Ok(())
    }

    pub fn effective_time(&self) -> f64 {
        effective_time(self.seq_len, self.stride)
    }

    pub fn utilization(&self) -> f64 {
        utilization(self.stride, self.ssr)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SequenceSample {
    pub robot_id: u64,
    pub offset: usize,
    pub window: usize,
    /// `seq_len × n_features`, row-major.
    pub features: Vec<f64>,
    /// Normalised targets (non-degenerate entries only).
    pub target: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub key: String,
    pub config: DatasetConfig,
    pub mask: FeatureMask,
    pub target_names: Vec<String>,
    pub seq_len: usize,
    pub n_features: usize,
    pub train: Vec<SequenceSample>,
    pub val: Vec<SequenceSample>,
}

impl Dataset {
    pub fn n_targets(&self) -> usize {
        self.target_names.len()
    }

    pub fn feature_names(&self) -> Vec<String> {
        self.mask.kept_names()
    }

    pub fn train_ids(&self) -> BTreeSet<u64> {
        self.train.iter().map(|s| s.robot_id).collect()
    }

    pub fn val_ids(&self) -> BTreeSet<u64> {
        self.val.iter().map(|s| s.robot_id).collect()
    }
}

/// Deterministic per-robot split: `max(1, round(fraction·n))` robots go to
/// validation.
pub fn split_robots(ids: &[u64], fraction: f64, seed: u64) -> Result<(Vec<u64>, Vec<u64>), DatasetError> {
    let mut ids: Vec<u64> = ids.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
    if ids.len() < 2 {
        return Err(DatasetError::EmptySplit(format!(
            "{} robot(s) cannot fill both splits",
            ids.len()
        )));
    }
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_val = ((fraction * ids.len() as f64).round() as usize).clamp(1, ids.len() - 1);
    let mut val = ids[..n_val].to_vec();
    let mut train = ids[n_val..].to_vec();
    val.sort_unstable();
    train.sort_unstable();
    Ok((train, val))
}

/// Raw feature rows and window metadata for one log.
fn log_samples(
    chain: &RigidChain,
    log: &TrajectoryLog,
    cfg: &DatasetConfig,
    target: &[f64],
) -> Vec<SequenceSample> {
    let dof = log.dof;
    offset_sample(log, cfg)
        .into_iter()
        .map(|w| {
            let mut features = Vec::new();
            for &f in &w.frames {
                if cfg.interpolate {
                    let t = log.time(f);
                    let q = resample_linear(&log.q, dof, log.dt, t);
                    let qd = resample_linear(&log.qd, dof, log.dt, t);
                    let tau = resample_linear(&log.tau, dof, log.dt, t);
                    enrich_features(chain, &q, &qd, &tau, &cfg.features, &mut features);
                } else {
                    enrich_features(chain, log.q(f), log.qd(f), log.tau(f), &cfg.features, &mut features);
                }
            }
            SequenceSample {
                robot_id: log.robot_id,
                offset: w.offset,
                window: w.index,
                features,
                target: target.to_vec(),
            }
        })
        .collect()
}

/// Materialises the train/validation samples.
///
/// Every log must be `Ok`; robots are split by id, constant feature
/// columns are found on the training split and the same mask is applied to
/// both splits.
pub fn build_dataset(
    manifest: &[ManifestRecord],
    template: &KinematicTemplate,
    logs: &[TrajectoryLog],
    table: &NormalizationTable,
    cfg: &DatasetConfig,
) -> Result<Dataset, DatasetError> {
    cfg.validate()?;
    let records: HashMap<u64, &ManifestRecord> = manifest.iter().map(|r| (r.id, r)).collect();
    for log in logs {
        if log.status != EpisodeStatus::Ok {
            return Err(DatasetError::RejectedLog {
                robot_id: log.robot_id,
                status: log.status,
            });
        }
        if log.dof != template.dof() {
            return Err(DatasetError::Config(format!(
                "log for robot {} has {} joints, template has {}",
                log.robot_id,
                log.dof,
                template.dof()
            )));
        }
        if !records.contains_key(&log.robot_id) {
            return Err(DatasetError::MissingRecord(log.robot_id));
        }
    }
    let ids: Vec<u64> = logs.iter().map(|l| l.robot_id).collect();
    let (train_ids, _) = split_robots(&ids, cfg.val_fraction, cfg.split_seed)?;
    let train_set: BTreeSet<u64> = train_ids.into_iter().collect();

    let keep_target: Vec<bool> = table.degenerate_mask().iter().map(|d| !d).collect();
    let target_names: Vec<String> = table
        .entries
        .iter()
        .zip(&keep_target)
        .filter(|(_, &k)| k)
        .map(|(e, _)| e.name.clone())
        .collect();
    let mut targets = HashMap::new();
    for log in logs {
        let norm = normalize_targets(&records[&log.robot_id].values(), table)?;
        let kept: Vec<f64> = norm.iter().zip(&keep_target).filter(|(_, &k)| k).map(|(v, _)| *v).collect();
        targets.insert(log.robot_id, kept);
    }

    let chain = RigidChain::from_template(template);
    let per_log: Vec<Vec<SequenceSample>> = logs
        .par_iter()
        .map(|log| log_samples(&chain, log, cfg, &targets[&log.robot_id]))
        .collect();
    let (mut train, mut val): (Vec<_>, Vec<_>) = per_log
        .into_iter()
        .flatten()
        .partition(|s| train_set.contains(&s.robot_id));
    if train.is_empty() || val.is_empty() {
        return Err(DatasetError::EmptySplit(format!(
            "{} train and {} validation sequences (logs too short for one window?)",
            train.len(),
            val.len()
        )));
    }

    let raw_names = raw_feature_names(template.dof(), &cfg.features);
    let train_rows: Vec<f64> = train.iter().flat_map(|s| s.features.iter().copied()).collect();
    let mask = prune_constant_features(&train_rows, &raw_names)?;
    drop(train_rows);
    for s in train.iter_mut().chain(val.iter_mut()) {
        s.features = mask.apply(&s.features);
    }
    let n_features = mask.kept_width();
    let mut ds = Dataset {
        key: String::new(),
        config: cfg.clone(),
        mask,
        target_names,
        seq_len: cfg.seq_len,
        n_features,
        train,
        val,
    };
    ds.key = cache_key(manifest, template, logs, table, cfg);
    Ok(ds)
}
