//! The identifiable parameter vector and its min-max normalisation.

use serde::{Deserialize, Serialize};

use super::DatasetError;
use crate::model::{
    compute_link_inertia, KinematicTemplate, RobotModel, VariationRanges, DOF,
};

/// Version of [`param_layout`]; bump when the ordering changes.
pub const PARAM_LAYOUT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ParamKind {
    Coulomb,
    Viscous,
    Mass,
    Com,
    Ixx,
    Iyy,
    Izz,
}

/// One entry of the parameter vector.
///
/// `index` is the 0-based joint for friction terms and the 1-based link
/// number for link terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ParamId {
    pub kind: ParamKind,
    pub index: usize,
}

impl ParamId {
    pub fn name(&self) -> String {
        match self.kind {
            ParamKind::Coulomb => format!("mu_c_J{}", self.index),
            ParamKind::Viscous => format!("mu_v_J{}", self.index),
            ParamKind::Mass => format!("mass_L{}", self.index),
            ParamKind::Com => format!("com_L{}", self.index),
            ParamKind::Ixx => format!("Ixx_L{}", self.index),
            ParamKind::Iyy => format!("Iyy_L{}", self.index),
            ParamKind::Izz => format!("Izz_L{}", self.index),
        }
    }

    pub fn is_friction(&self) -> bool {
        matches!(self.kind, ParamKind::Coulomb | ParamKind::Viscous)
    }

    pub fn is_inertial(&self) -> bool {
        matches!(self.kind, ParamKind::Ixx | ParamKind::Iyy | ParamKind::Izz)
    }
}

/// Fixed ordering: `mu_c[J0..J5]`, `mu_v[J0..J5]`, `mass[L2..L6]`,
/// `com[L2..L6]`, `Izz[L1]`, then `(Ixx, Iyy, Izz)` for `L2..L6`.
pub fn param_layout() -> Vec<ParamId> {
    let id = |kind, index| ParamId { kind, index };
    let mut out = Vec::with_capacity(38);
    out.extend((0..DOF).map(|j| id(ParamKind::Coulomb, j)));
    out.extend((0..DOF).map(|j| id(ParamKind::Viscous, j)));
    out.extend((2..=DOF).map(|l| id(ParamKind::Mass, l)));
    out.extend((2..=DOF).map(|l| id(ParamKind::Com, l)));
    out.push(id(ParamKind::Izz, 1));
    for l in 2..=DOF {
        out.extend([ParamKind::Ixx, ParamKind::Iyy, ParamKind::Izz].map(|k| id(k, l)));
    }
    out
}

/// Raw (physical-unit) values in [`param_layout`] order.
pub fn extract_params(model: &RobotModel) -> Result<Vec<f64>, DatasetError> {
    if model.links.len() != DOF || model.joints.len() != DOF {
        return Err(DatasetError::Config(format!(
            "parameter vector needs {DOF} joints, model has {}",
            model.joints.len()
        )));
    }
    Ok(param_layout()
        .iter()
        .map(|p| {
            let link = p.index.checked_sub(1).map(|i| &model.links[i]);
            match p.kind {
                ParamKind::Coulomb => model.joints[p.index].mu_c,
                ParamKind::Viscous => model.joints[p.index].mu_v,
                ParamKind::Mass => link.map_or(0.0, |l| l.mass),
                ParamKind::Com => link.map_or(0.0, |l| l.com_offset),
                ParamKind::Ixx => link.map_or(0.0, |l| l.inertia[0]),
                ParamKind::Iyy => link.map_or(0.0, |l| l.inertia[1]),
                ParamKind::Izz => link.map_or(0.0, |l| l.inertia[2]),
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormRange {
    pub name: String,
    pub min: f64,
    pub max: f64,
}

impl NormRange {
    pub fn is_degenerate(&self) -> bool {
        self.max <= self.min
    }
}

/// Per-entry `[min, max]` bounds implied by the generation ranges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationTable {
    pub entries: Vec<NormRange>,
}

/// Relative slack for values that sit on a bound up to rounding.
const BOUND_SLACK: f64 = 1e-9;

impl NormalizationTable {
    /// Mass and inertia are monotone in diameter and density, so their
    /// extremes sit on the corners of the (shape, diameter, density) box.
    pub fn from_ranges(
        ranges: &VariationRanges,
        template: &KinematicTemplate,
    ) -> Result<Self, DatasetError> {
        ranges.validate().map_err(|e| DatasetError::Config(e.to_string()))?;
        if template.dof() != DOF {
            return Err(DatasetError::Config(format!("template must have {DOF} joints")));
        }
        let corners = |length: f64| -> Result<Vec<(f64, [f64; 3])>, DatasetError> {
            let mut out = Vec::new();
            for &shape in &ranges.shapes {
                for d in [ranges.diameter.min, ranges.diameter.max] {
                    for rho in [ranges.density.min, ranges.density.max] {
                        let mass = rho * shape.area(d) * length;
                        let inertia = compute_link_inertia(shape, d, length, mass, 0.0)
                            .map_err(|e| DatasetError::Config(e.to_string()))?;
                        out.push((mass, inertia));
                    }
                }
            }
            Ok(out)
        };
        let span = |vals: &mut dyn Iterator<Item = f64>| {
            vals.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
        };
        let mut entries = Vec::with_capacity(38);
        for p in param_layout() {
            let (min, max) = match p.kind {
                ParamKind::Coulomb => (ranges.mu_c.min, ranges.mu_c.max),
                ParamKind::Viscous => (ranges.mu_v.min, ranges.mu_v.max),
                ParamKind::Com => {
                    let l = template.link_lengths[p.index - 1];
                    (ranges.com_fraction.min * l, ranges.com_fraction.max * l)
                }
                kind => {
                    let c = corners(template.link_lengths[p.index - 1])?;
                    let axis = match kind {
                        ParamKind::Ixx => Some(0),
                        ParamKind::Iyy => Some(1),
                        ParamKind::Izz => Some(2),
                        _ => None,
                    };
                    match axis {
                        Some(a) => span(&mut c.iter().map(|(_, i)| i[a])),
                        None => span(&mut c.iter().map(|(m, _)| *m)),
                    }
                }
            };
            entries.push(NormRange {
                name: p.name(),
                min,
                max,
            });
        }
        Ok(Self { entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// `true` for entries whose range collapses to a point.
    pub fn degenerate_mask(&self) -> Vec<bool> {
        self.entries.iter().map(NormRange::is_degenerate).collect()
    }
}

/// Min-max maps raw values to `[0, 1]`; degenerate entries map to 0.
pub fn normalize_targets(raw: &[f64], table: &NormalizationTable) -> Result<Vec<f64>, DatasetError> {
    if raw.len() != table.len() {
        return Err(DatasetError::Config(format!(
            "expected {} parameters, got {}",
            table.len(),
            raw.len()
        )));
    }
    raw.iter()
        .zip(&table.entries)
        .map(|(&v, r)| {
            let slack = BOUND_SLACK * (r.min.abs().max(r.max.abs()).max(f64::MIN_POSITIVE));
            if !v.is_finite() || v < r.min - slack || v > r.max + slack {
                return Err(DatasetError::OutOfRange {
                    name: r.name.clone(),
                    value: v,
                    min: r.min,
                    max: r.max,
                });
            }
            if r.is_degenerate() {
                Ok(0.0)
            } else {
                Ok(((v - r.min) / (r.max - r.min)).clamp(0.0, 1.0))
            }
        })
        .collect()
}

/// Inverse of [`normalize_targets`].
pub fn denormalize_targets(norm: &[f64], table: &NormalizationTable) -> Vec<f64> {
    norm.iter()
        .zip(&table.entries)
        .map(|(&u, r)| r.min + u * (r.max - r.min))
        .collect()
}
