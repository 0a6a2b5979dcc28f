use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{EncoderModel, EstimatorError};
use crate::dataset::SequenceSample;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetMetric {
    pub name: String,
    /// `None` when the target has no variance in the split.
    pub r2: Option<f64>,
    pub rmse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub targets: Vec<TargetMetric>,
    pub mean_r2: Option<f64>,
    pub mean_rmse: f64,
    pub n_samples: usize,
}

/// `(R², RMSE)` for one target. R² is undefined (and `None`) when the
/// targets' standard deviation is below 1e-12.
pub fn r2_rmse(pred: &[f64], target: &[f64]) -> (Option<f64>, f64) {
    let n = target.len() as f64;
    let mean = target.iter().sum::<f64>() / n;
    let ss_tot: f64 = target.iter().map(|t| (t - mean) * (t - mean)).sum();
    let ss_res: f64 = pred.iter().zip(target).map(|(p, t)| (p - t) * (p - t)).sum();
    let rmse = (ss_res / n).sqrt();
    let r2 = (ss_tot > 1e-24 * n).then(|| 1.0 - ss_res / ss_tot);
    (r2, rmse)
}

fn mean_of(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| s / n as f64)
}

impl Metrics {
    pub fn get(&self, name: &str) -> Option<&TargetMetric> {
        self.targets.iter().find(|t| t.name == name)
    }

    /// Mean R² over defined targets whose name starts with any of `prefixes`.
    pub fn group_r2(&self, prefixes: &[&str]) -> Option<f64> {
        mean_of(
            self.targets
                .iter()
                .filter(|t| prefixes.iter().any(|p| t.name.starts_with(p)))
                .filter_map(|t| t.r2),
        )
    }
}

/// Metrics from per-sample predictions and targets.
pub fn compute_metrics(names: &[String], preds: &[Vec<f64>], targets: &[Vec<f64>]) -> Metrics {
    let per: Vec<TargetMetric> = names
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let p: Vec<f64> = preds.iter().map(|r| r[j]).collect();
            let t: Vec<f64> = targets.iter().map(|r| r[j]).collect();
            let (r2, rmse) = r2_rmse(&p, &t);
            TargetMetric {
                name: name.clone(),
                r2,
                rmse,
            }
        })
        .collect();
    Metrics {
        mean_r2: mean_of(per.iter().filter_map(|t| t.r2)),
        mean_rmse: mean_of(per.iter().map(|t| t.rmse)).unwrap_or(0.0),
        targets: per,
        n_samples: preds.len(),
    }
}

pub(crate) fn predict_all(model: &EncoderModel, split: &[SequenceSample]) -> Result<Vec<Vec<f64>>, EstimatorError> {
    split.par_iter().map(|s| model.predict(&s.features)).collect()
}

pub fn evaluate(model: &EncoderModel, split: &[SequenceSample], names: &[String]) -> Result<Metrics, EstimatorError> {
    if split.is_empty() {
        return Err(EstimatorError::EmptySplit("nothing to evaluate".into()));
    }
    if names.len() != model.config.n_outputs {
        return Err(EstimatorError::Shape("target names differ from model outputs".into()));
    }
    let preds = predict_all(model, split)?;
    let targets: Vec<Vec<f64>> = split.iter().map(|s| s.target.clone()).collect();
    Ok(compute_metrics(names, &preds, &targets))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_point_example() {
        let (r2, rmse) = r2_rmse(&[0.0, 1.0, 1.0], &[0.0, 1.0, 2.0]);
        assert_eq!(r2, Some(0.5));
        assert_eq!(rmse, (1.0f64 / 3.0).sqrt());
    }

    #[test]
    fn perfect_and_mean_predictors() {
        let t = [0.2, 0.9, 0.4, 0.7];
        assert_eq!(r2_rmse(&t, &t), (Some(1.0), 0.0));
        let m = t.iter().sum::<f64>() / 4.0;
        let (r2, _) = r2_rmse(&[m; 4], &t);
        assert!(r2.unwrap().abs() < 1e-15);
    }

    #[test]
    fn zero_variance_is_undefined_and_excluded() {
        let names = vec!["a".to_string(), "b".to_string()];
        let preds = vec![vec![0.0, 0.5], vec![1.0, 0.5]];
        let targets = vec![vec![0.0, 0.3], vec![1.0, 0.3]];
        let m = compute_metrics(&names, &preds, &targets);
        assert_eq!(m.targets[1].r2, None);
        assert_eq!(m.mean_r2, Some(1.0));
        assert!((m.targets[1].rmse - 0.2).abs() < 1e-15);
    }

    #[test]
    fn group_means() {
        let names: Vec<String> = ["mass_L2", "mass_L3", "mu_c_J0"].iter().map(|s| s.to_string()).collect();
        let m = Metrics {
            targets: names
                .iter()
                .zip([0.8, 0.6, 0.1])
                .map(|(n, r)| TargetMetric {
                    name: n.clone(),
                    r2: Some(r),
                    rmse: 0.1,
                })
                .collect(),
            mean_r2: None,
            mean_rmse: 0.1,
            n_samples: 1,
        };
        assert!((m.group_r2(&["mass_"]).unwrap() - 0.7).abs() < 1e-15);
        assert_eq!(m.group_r2(&["Ixx"]), None);
    }
}
