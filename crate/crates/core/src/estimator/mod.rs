//! Transformer encoder regressor with hand-written gradients.

mod checkpoint;
mod metrics;
mod model;
mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_VERSION};
pub use metrics::{compute_metrics, evaluate, r2_rmse, Metrics, TargetMetric};
pub use model::{positional_encoding, EncoderModel, ForwardCache, ParamLayout, TensorSpec};
pub use train::{clip_global_norm, train, Adam, EpochRecord, TrainHistory};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{Dataset, SequenceSample};

#[derive(Debug, Error)]
pub enum EstimatorError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("training diverged at epoch {epoch}")]
    Diverged { epoch: usize },
    #[error("empty split: {0}")]
    EmptySplit(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pooling {
    #[default]
    Mean,
    Last,
}

/// Size-independent architecture choices; combined with a dataset's shape
/// through [`EncoderConfig::for_dataset`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchConfig {
    pub d_model: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    #[serde(default)]
    pub dropout: f64,
    #[serde(default)]
    pub pooling: Pooling,
    #[serde(default = "yes")]
    pub positional_encoding: bool,
    /// Give each joint's feature block its own slice of the embedding.
    #[serde(default)]
    pub grouped_embedding: bool,
}

fn yes() -> bool {
    true
}

impl Default for ArchConfig {
    fn default() -> Self {
        Self {
            d_model: 32,
            n_layers: 2,
            n_heads: 4,
            d_ff: 64,
            dropout: 0.0,
            pooling: Pooling::Mean,
            positional_encoding: true,
            grouped_embedding: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub d_model: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    pub dropout: f64,
    pub seq_len: usize,
    pub n_features: usize,
    pub n_outputs: usize,
    pub pooling: Pooling,
    pub positional_encoding: bool,
    /// Group index per input feature when the embedding is grouped.
    pub feature_groups: Option<Vec<usize>>,
}

impl EncoderConfig {
    pub fn for_dataset(arch: &ArchConfig, ds: &Dataset) -> Self {
        Self {
            d_model: arch.d_model,
            n_layers: arch.n_layers,
            n_heads: arch.n_heads,
            d_ff: arch.d_ff,
            dropout: arch.dropout,
            seq_len: ds.seq_len,
            n_features: ds.n_features,
            n_outputs: ds.n_targets(),
            pooling: arch.pooling,
            positional_encoding: arch.positional_encoding,
            feature_groups: arch
                .grouped_embedding
                .then(|| feature_groups(&ds.feature_names())),
        }
    }

    pub fn validate(&self) -> Result<(), EstimatorError> {
        let err = |m: String| Err(EstimatorError::Config(m));
        for (name, v) in [
            ("d_model", self.d_model),
            ("n_layers", self.n_layers),
            ("n_heads", self.n_heads),
            ("d_ff", self.d_ff),
            ("seq_len", self.seq_len),
            ("n_features", self.n_features),
            ("n_outputs", self.n_outputs),
        ] {
            if v == 0 {
                return err(format!("{name} must be positive"));
            }
        }
        if self.d_model % self.n_heads != 0 {
            return err(format!(
                "d_model {} not divisible by n_heads {}",
                self.d_model, self.n_heads
            ));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return err(format!("dropout {} must lie in [0, 1)", self.dropout));
        }
        if let Some(g) = &self.feature_groups {
            if g.len() != self.n_features {
                return err("feature_groups length differs from n_features".into());
            }
            let n = g.iter().max().map_or(0, |m| m + 1);
            if n > self.d_model {
                return err(format!("{n} feature groups exceed d_model {}", self.d_model));
            }
        }
        Ok(())
    }
}

/// Joint index of each feature column: `q_j`, `qd_j`, `tau_j` belong to
/// joint `j`, a Jacobian column `J.._L<l>_J<j>` to joint `j − 1`.
pub fn feature_groups(names: &[String]) -> Vec<usize> {
    let raw: Vec<usize> = names
        .iter()
        .map(|n| {
            if let Some(pos) = n.rfind("_J") {
                n[pos + 2..].parse::<usize>().map_or(0, |j| j.saturating_sub(1))
            } else {
                n.rsplit('_').next().and_then(|s| s.parse().ok()).unwrap_or(0)
            }
        })
        .collect();
    // renumber densely so pruned joints leave no empty groups
    let mut ids: Vec<usize> = raw.clone();
    ids.sort_unstable();
    ids.dedup();
    raw.iter().map(|g| ids.binary_search(g).expect("present")).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub clip_norm: f64,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    #[serde(default = "one")]
    pub loss_scale: f64,
}

fn one() -> f64 {
    1.0
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            batch_size: 32,
            epochs: 60,
            seed: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            clip_norm: 1.0,
            patience: 15,
            loss_scale: 1.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), EstimatorError> {
        let err = |m: &str| Err(EstimatorError::Config(m.into()));
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return err("learning_rate must be finite and non-negative");
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return err("batch_size and epochs must be positive");
        }
        if !(self.beta1 > 0.0 && self.beta1 < 1.0 && self.beta2 > 0.0 && self.beta2 < 1.0) {
            return err("betas must lie in (0, 1)");
        }
        if !(self.eps > 0.0 && self.clip_norm > 0.0 && self.loss_scale > 0.0) {
            return err("eps, clip_norm and loss_scale must be positive");
        }
        if self.patience == 0 {
            return err("patience must be positive");
        }
        Ok(())
    }
}

/// Per-feature z-score applied to inputs before the embedding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Scaler {
    pub fn identity(n: usize) -> Self {
        Self {
            mean: vec![0.0; n],
            std: vec![1.0; n],
        }
    }

    /// Fits on every timestep of every sample. Near-constant columns keep
    /// unit scale.
    pub fn fit(samples: &[SequenceSample], n_features: usize) -> Self {
        let mut sum = vec![0.0; n_features];
        let mut count = 0usize;
        for s in samples {
            for row in s.features.chunks_exact(n_features) {
                for (a, v) in sum.iter_mut().zip(row) {
                    *a += v;
                }
                count += 1;
            }
        }
        let n = count.max(1) as f64;
        let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
        let mut var = vec![0.0; n_features];
        for s in samples {
            for row in s.features.chunks_exact(n_features) {
                for ((a, v), m) in var.iter_mut().zip(row).zip(&mean) {
                    *a += (v - m) * (v - m);
                }
            }
        }
        let std = var
            .iter()
            .map(|v| {
                let s = (v / n).sqrt();
                if s > 1e-12 {
                    s
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, std }
    }

    pub fn apply(&self, x: &mut DMatrix<f64>) {
        for (c, (m, s)) in self.mean.iter().zip(&self.std).enumerate() {
            x.column_mut(c).apply(|v| *v = (*v - m) / s);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn groups_from_names() {
        let names: Vec<String> = ["q_0", "q_2", "qd_1", "tau_2", "Jvz_L2_J1", "Jvz_L3_J3"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        assert_eq!(feature_groups(&names), vec![0, 2, 1, 2, 0, 2]);
    }

    #[test]
    fn config_validation() {
        let mut c = EncoderConfig {
            d_model: 8,
            n_layers: 1,
            n_heads: 2,
            d_ff: 16,
            dropout: 0.0,
            seq_len: 4,
            n_features: 3,
            n_outputs: 2,
            pooling: Pooling::Mean,
            positional_encoding: true,
            feature_groups: None,
        };
        assert!(c.validate().is_ok());
        c.n_heads = 3;
        assert!(c.validate().is_err());
        c.n_heads = 2;
        c.dropout = 1.0;
        assert!(c.validate().is_err());
        assert!(TrainConfig::default().validate().is_ok());
        let t = TrainConfig {
            beta1: 1.0,
            ..TrainConfig::default()
        };
        assert!(t.validate().is_err());
    }

    #[test]
    fn scaler_standardises() {
        let s = vec![SequenceSample {
            robot_id: 0,
            offset: 0,
            window: 0,
            features: vec![1.0, 5.0, 3.0, 5.0],
            target: vec![],
        }];
        let sc = Scaler::fit(&s, 2);
        assert_eq!(sc.mean, vec![2.0, 5.0]);
        assert_eq!(sc.std, vec![1.0, 1.0]);
        let mut x = DMatrix::from_row_slice(2, 2, &s[0].features);
        sc.apply(&mut x);
        assert_eq!(x, DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 1.0, 0.0]));
    }
}
