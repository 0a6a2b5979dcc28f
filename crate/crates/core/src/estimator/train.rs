use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{compute_metrics, predict_all};
use super::{EncoderConfig, EncoderModel, EstimatorError, Scaler, TrainConfig};
use crate::dataset::Dataset;

/// Samples per parallel work unit. Fixed so that the summation order, and
/// therefore the result, does not depend on the thread count.
const CHUNK: usize = 8;

#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(n: usize, cfg: &TrainConfig) -> Self {
        Self {
            lr: cfg.learning_rate,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            eps: cfg.eps,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let mh = self.m[i] / c1;
            let vh = self.v[i] / c2;
            params[i] -= self.lr * mh / (vh.sqrt() + self.eps);
        }
    }
}

/// Rescales `grad` so its Euclidean norm is at most `max_norm`; returns the
/// norm before clipping.
pub fn clip_global_norm(grad: &mut [f64], max_norm: f64) -> f64 {
    let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm {
        let s = max_norm / norm;
        grad.iter_mut().for_each(|g| *g *= s);
    }
    norm
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_mean_r2: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub stopped_early: bool,
}

fn mix(a: u64, b: u64) -> u64 {
    (a ^ b.wrapping_mul(0x9E37_79B9_7F4A_7C15)).rotate_left(17).wrapping_mul(0xBF58_476D_1CE4_E5B9)
}

/// Mini-batch Adam with global-norm clipping. Validation is scored each
/// epoch by mean R² (validation MSE when no target varies); training stops
/// after `patience` epochs without improvement and the best weights are
/// restored.
pub fn train(
    ds: &Dataset,
    enc_cfg: &EncoderConfig,
    cfg: &TrainConfig,
) -> Result<(EncoderModel, TrainHistory), EstimatorError> {
    cfg.validate()?;
    if ds.train.is_empty() || ds.val.is_empty() {
        return Err(EstimatorError::EmptySplit(format!(
            "{} train / {} validation samples",
            ds.train.len(),
            ds.val.len()
        )));
    }
    if enc_cfg.seq_len != ds.seq_len || enc_cfg.n_features != ds.n_features || enc_cfg.n_outputs != ds.n_targets() {
        return Err(EstimatorError::Shape(
            "encoder configuration does not match the dataset".into(),
        ));
    }
    let mut model = EncoderModel::new(enc_cfg.clone(), cfg.seed)?;
    model.scaler = Scaler::fit(&ds.train, ds.n_features);
    let inputs: Vec<DMatrix<f64>> = ds
        .train
        .iter()
        .map(|s| model.prepare(&s.features))
        .collect::<Result<_, _>>()?;
    let val_targets: Vec<Vec<f64>> = ds.val.iter().map(|s| s.target.clone()).collect();
    let p = enc_cfg.n_outputs;

    let mut adam = Adam::new(model.n_params(), cfg);
    let mut order: Vec<usize> = (0..inputs.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(mix(cfg.seed, 1));
    let mut history = TrainHistory {
        epochs: Vec::new(),
        best_epoch: 0,
        stopped_early: false,
    };
    let mut best = (f64::NEG_INFINITY, model.params.clone());
    let mut wait = 0;
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
            let dropout_seed = (enc_cfg.dropout > 0.0).then(|| mix(mix(cfg.seed, epoch as u64 + 2), b as u64));
            let parts: Vec<(f64, Vec<f64>, usize)> = batch
                .par_chunks(CHUNK)
                .enumerate()
                .map(|(c, idx)| {
                    let xs: Vec<&DMatrix<f64>> = idx.iter().map(|&i| &inputs[i]).collect();
                    let ts: Vec<&[f64]> = idx.iter().map(|&i| ds.train[i].target.as_slice()).collect();
                    let (l, g) = model.loss_and_gradient(&xs, &ts, cfg.loss_scale, dropout_seed.map(|s| mix(s, c as u64)));
                    (l, g, idx.len())
                })
                .collect();
            let mut grad = vec![0.0; model.n_params()];
            let mut loss = 0.0;
            for (l, g, n) in parts {
                let w = n as f64 / batch.len() as f64;
                loss += w * l;
                for (a, v) in grad.iter_mut().zip(&g) {
                    *a += w * v;
                }
            }
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(EstimatorError::Diverged { epoch });
            }
            clip_global_norm(&mut grad, cfg.clip_norm);
            adam.step(&mut model.params, &grad);
            loss_sum += loss * batch.len() as f64;
        }
        if model.params.iter().any(|w| !w.is_finite()) {
            return Err(EstimatorError::Diverged { epoch });
        }
        let preds = predict_all(&model, &ds.val)?;
        let val_loss = cfg.loss_scale
            * preds
                .iter()
                .zip(&val_targets)
                .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)))
                .sum::<f64>()
            / (preds.len() * p) as f64;
        let metrics = compute_metrics(&ds.target_names, &preds, &val_targets);
        history.epochs.push(EpochRecord {
            epoch,
            train_loss: loss_sum / inputs.len() as f64,
            val_loss,
            val_mean_r2: metrics.mean_r2,
        });
        if !val_loss.is_finite() {
            return Err(EstimatorError::Diverged { epoch });
        }
        let score = metrics.mean_r2.unwrap_or(-val_loss);
        if score > best.0 {
            best = (score, model.params.clone());
            history.best_epoch = epoch;
            wait = 0;
        } else {
            wait += 1;
            if wait >= cfg.patience {
                history.stopped_early = true;
                break;
            }
        }
    }
    model.params = best.1;
    Ok((model, history))
}
