//! Per-frame feature rows: joint state, torque and Jacobian elements.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::DatasetError;
use crate::dynamics::RigidChain;

/// Which Jacobian rows are appended to each frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum FeatureLayout {
    /// Linear-z row of every link frame (the gravity direction).
    #[default]
    LinearZ,
    /// All six rows of every link frame.
    Full,
}

const ROW_NAMES: [&str; 6] = ["vx", "vy", "vz", "wx", "wy", "wz"];

impl FeatureLayout {
    fn rows(self) -> &'static [usize] {
        match self {
            FeatureLayout::LinearZ => &[2],
            FeatureLayout::Full => &[0, 1, 2, 3, 4, 5],
        }
    }
}

/// Which raw columns make up a frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub include_torque: bool,
    pub include_jacobian: bool,
    pub layout: FeatureLayout,
}

impl Default for FeatureSpec {
    fn default() -> Self {
        Self {
            include_torque: true,
            include_jacobian: true,
            layout: FeatureLayout::LinearZ,
        }
    }
}

/// Column names in order: `q_j`, `qd_j`, `tau_j`, then `J<row>_L<l>_J<j>`
/// for link frames `l = 1..n` and joints `j = 1..l` (1-based).
pub fn raw_feature_names(dof: usize, spec: &FeatureSpec) -> Vec<String> {
    let mut names: Vec<String> = (0..dof).map(|j| format!("q_{j}")).collect();
    names.extend((0..dof).map(|j| format!("qd_{j}")));
    if spec.include_torque {
        names.extend((0..dof).map(|j| format!("tau_{j}")));
    }
    if spec.include_jacobian {
        for l in 1..=dof {
            for &r in spec.layout.rows() {
                for j in 1..=l {
                    names.push(format!("J{}_L{l}_J{j}", ROW_NAMES[r]));
                }
            }
        }
    }
    names
}

/// Jacobian features for one configuration, matching [`raw_feature_names`].
pub fn jacobian_features(chain: &RigidChain, q: &[f64], layout: FeatureLayout, out: &mut Vec<f64>) {
    let n = chain.dof();
    let kin = chain.kinematics(&DVector::from_column_slice(q));
    for l in 1..=n {
        let jac = chain.point_jacobian(&kin, l - 1, &kin.origin[l - 1]);
        for &r in layout.rows() {
            out.extend((0..l).map(|j| jac[(r, j)]));
        }
    }
}

/// One raw feature row from a frame's state and torque.
pub fn enrich_features(
    chain: &RigidChain,
    q: &[f64],
    qd: &[f64],
    tau: &[f64],
    spec: &FeatureSpec,
    out: &mut Vec<f64>,
) {
    out.extend_from_slice(q);
    out.extend_from_slice(qd);
    if spec.include_torque {
        out.extend_from_slice(tau);
    }
    if spec.include_jacobian {
        jacobian_features(chain, q, spec.layout, out);
    }
}

/// Keep-flags over raw columns, with the reason for each dropped one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMask {
    pub keep: Vec<bool>,
    pub names: Vec<String>,
    pub dropped: Vec<(String, String)>,
}

/// Columns with standard deviation below this are treated as constant.
pub const CONSTANT_STD: f64 = 1e-10;

impl FeatureMask {
    pub fn all(names: Vec<String>) -> Self {
        Self {
            keep: vec![true; names.len()],
            names,
            dropped: Vec::new(),
        }
    }

    pub fn raw_width(&self) -> usize {
        self.keep.len()
    }

    pub fn kept_width(&self) -> usize {
        self.keep.iter().filter(|&&k| k).count()
    }

    pub fn kept_names(&self) -> Vec<String> {
        self.names
            .iter()
            .zip(&self.keep)
            .filter(|(_, &k)| k)
            .map(|(n, _)| n.clone())
            .collect()
    }

    /// Applies the mask to row-major data with `raw_width` columns.
    pub fn apply(&self, rows: &[f64]) -> Vec<f64> {
        let w = self.raw_width();
        let mut out = Vec::with_capacity(rows.len() / w.max(1) * self.kept_width());
        for row in rows.chunks_exact(w) {
            out.extend(row.iter().zip(&self.keep).filter(|(_, &k)| k).map(|(v, _)| *v));
        }
        out
    }

    /// Mask for data that has already been masked by `self`, then pruned
    /// again by `inner`.
    pub fn compose(&self, inner: &FeatureMask) -> FeatureMask {
        let mut keep = self.keep.clone();
        let mut dropped = self.dropped.clone();
        let mut it = inner.keep.iter();
        for (i, k) in keep.iter_mut().enumerate() {
            if *k && !*it.next().unwrap_or(&true) {
                *k = false;
                dropped.push((self.names[i].clone(), "constant".into()));
            }
        }
        FeatureMask {
            keep,
            names: self.names.clone(),
            dropped,
        }
    }
}

/// Per-column sample standard deviation of row-major data.
pub fn column_std(rows: &[f64], width: usize) -> Vec<f64> {
    let n = if width == 0 { 0 } else { rows.len() / width };
    let mut mean = vec![0.0; width];
    for row in rows.chunks_exact(width) {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n.max(1) as f64);
    let mut var = vec![0.0; width];
    for row in rows.chunks_exact(width) {
        for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    var.iter()
        .map(|s| if n > 1 { (s / (n - 1) as f64).sqrt() } else { 0.0 })
        .collect()
}

/// Drops every column whose sample standard deviation over `rows` is below
/// [`CONSTANT_STD`].
pub fn prune_constant_features(rows: &[f64], names: &[String]) -> Result<FeatureMask, DatasetError> {
    let width = names.len();
    if width == 0 || rows.is_empty() || rows.len() % width != 0 {
        return Err(DatasetError::Degenerate("empty feature matrix".into()));
    }
    let std = column_std(rows, width);
    let keep: Vec<bool> = std.iter().map(|s| *s >= CONSTANT_STD).collect();
    if !keep.iter().any(|&k| k) {
        return Err(DatasetError::Degenerate("every feature column is constant".into()));
    }
    let dropped = names
        .iter()
        .zip(&std)
        .filter(|(_, s)| **s < CONSTANT_STD)
        .map(|(n, s)| (n.clone(), format!("constant (std {s:.1e})")))
        .collect();
    Ok(FeatureMask {
        keep,
        names: names.to_vec(),
        dropped,
    })
}
