//! Procedural manipulator models.
//!
//! A [`RobotModel`] is a serial chain of revolute joints sharing one
//! [`KinematicTemplate`] across a generation run while the link geometry,
//! mass distribution and joint friction vary per robot.

mod generate;
mod inertia;
mod manifest;
mod template;
mod urdf;

pub use generate::{generate_fleet, generate_robot, robot_seed, Interval, VariationRanges};
pub use inertia::compute_link_inertia;
pub use manifest::{read_manifest, write_manifest, ManifestRecord, MANIFEST_VERSION};
pub use template::{JointTemplate, KinematicTemplate};
pub use urdf::{parse_urdf, serialize_urdf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Number of actuated joints of a generated manipulator.
pub const DOF: usize = 6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid range `{name}`: {reason}")]
    Range { name: String, reason: String },
    #[error("invalid geometry: {0}")]
    Domain(String),
    #[error("invalid template: {0}")]
    Template(String),
    #[error("invalid model: {0}")]
    Invalid(String),
    #[error("xml parse error at {line}:{column}: {message}")]
    Parse {
        line: u32,
        column: u32,
        message: String,
    },
    #[error("unsupported URDF feature: {0}")]
    Unsupported(String),
    #[error("malformed URDF: {0}")]
    Malformed(String),
    #[error("manifest error: {0}")]
    Manifest(String),
}

/// Cross-section of a link body. The principal axis is the link's local z.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LinkShape {
    Cylinder,
    Box,
}

impl LinkShape {
    /// Cross-sectional area for the given diameter (cylinder) or side (box).
    pub fn area(self, diameter: f64) -> f64 {
        match self {
            LinkShape::Cylinder => std::f64::consts::PI * diameter * diameter / 4.0,
            LinkShape::Box => diameter * diameter,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkSpec {
    pub shape: LinkShape,
    /// Cylinder diameter or box side, meters.
    pub diameter: f64,
    /// Length along the principal axis, meters.
    pub length: f64,
    pub mass: f64,
    /// Signed COM displacement along the principal axis from the geometric center.
    pub com_offset: f64,
    /// Principal moments at the COM in the link frame: `[Ixx, Iyy, Izz]`.
    pub inertia: [f64; 3],
}

impl LinkSpec {
    /// COM position in the link frame. The body spans `z ∈ [0, length]`.
    pub fn com_position(&self) -> [f64; 3] {
        [0.0, 0.0, 0.5 * self.length + self.com_offset]
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let finite = [self.diameter, self.length, self.mass, self.com_offset]
            .iter()
            .chain(self.inertia.iter())
            .all(|v| v.is_finite());
        if !finite {
            return Err(ModelError::Invalid("non-finite link field".into()));
        }
        if self.mass <= 0.0 || self.diameter <= 0.0 {
            return Err(ModelError::Invalid(format!(
                "mass and diameter must be positive (mass={}, diameter={})",
                self.mass, self.diameter
            )));
        }
        if self.length <= 0.0 {
            return Err(ModelError::Invalid(format!("link length {} <= 0", self.length)));
        }
        if self.com_offset.abs() > 0.5 * self.length {
            return Err(ModelError::Invalid(format!(
                "com offset {} exceeds half length {}",
                self.com_offset,
                0.5 * self.length
            )));
        }
        let [ixx, iyy, izz] = self.inertia;
        if ixx <= 0.0 || iyy <= 0.0 || izz <= 0.0 {
            return Err(ModelError::Invalid("inertia entries must be positive".into()));
        }
        // relative slack for rounding in the closed forms
        let slack = 1e-12 * (ixx + iyy + izz);
        if ixx > iyy + izz + slack || iyy > ixx + izz + slack || izz > ixx + iyy + slack {
            return Err(ModelError::Invalid(format!(
                "inertia {:?} violates the triangle inequality",
                self.inertia
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointSpec {
    /// Coulomb friction coefficient, N·m.
    pub mu_c: f64,
    /// Viscous friction coefficient, N·m·s/rad.
    pub mu_v: f64,
}

impl JointSpec {
    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.mu_c.is_finite() && self.mu_v.is_finite()) || self.mu_c < 0.0 || self.mu_v < 0.0
        {
            return Err(ModelError::Invalid(format!(
                "friction coefficients must be finite and non-negative (mu_c={}, mu_v={})",
                self.mu_c, self.mu_v
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotModel {
    pub id: u64,
    pub template: KinematicTemplate,
    pub links: Vec<LinkSpec>,
    pub joints: Vec<JointSpec>,
    pub generation_seed: u64,
}

impl RobotModel {
    pub fn dof(&self) -> usize {
        self.joints.len()
    }

    pub fn with_id(mut self, id: u64) -> Self {
        self.id = id;
        self
    }

    /// Checks chain consistency and every per-link and per-joint invariant.
    ///
    /// Chains of any length are accepted here; generation and the parameter
    /// layout additionally require [`DOF`] joints.
    pub fn validate(&self) -> Result<(), ModelError> {
        self.template.validate()?;
        let n = self.template.dof();
        if self.links.len() != n || self.joints.len() != n {
            return Err(ModelError::Invalid(format!(
                "template has {} joints but model has {} links and {} joints",
                n,
                self.links.len(),
                self.joints.len()
            )));
        }
        for (i, (link, len)) in self.links.iter().zip(&self.template.link_lengths).enumerate() {
            link.validate()
                .map_err(|e| ModelError::Invalid(format!("link {}: {e}", i + 1)))?;
            if link.length != *len {
                return Err(ModelError::Invalid(format!(
                    "link {} length {} differs from template length {}",
                    i + 1,
                    link.length,
                    len
                )));
            }
        }
        for (i, joint) in self.joints.iter().enumerate() {
            joint
                .validate()
                .map_err(|e| ModelError::Invalid(format!("joint {}: {e}", i + 1)))?;
        }
        Ok(())
    }

    pub fn joint_limits(&self) -> Vec<(f64, f64)> {
        self.template.joints.iter().map(|j| (j.lower, j.upper)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn link_validation_rejects_bad_com() {
        let mut link = LinkSpec {
            shape: LinkShape::Cylinder,
            diameter: 0.05,
            length: 0.3,
            mass: 1.0,
            com_offset: 0.0,
            inertia: compute_link_inertia(LinkShape::Cylinder, 0.05, 0.3, 1.0, 0.0).unwrap(),
        };
        assert!(link.validate().is_ok());
        link.com_offset = 0.2;
        assert!(link.validate().is_err());
    }

    #[test]
    fn joint_validation_rejects_negative_friction() {
        assert!(JointSpec { mu_c: -0.1, mu_v: 0.0 }.validate().is_err());
        assert!(JointSpec { mu_c: 0.0, mu_v: f64::NAN }.validate().is_err());
        assert!(JointSpec { mu_c: 0.0, mu_v: 0.0 }.validate().is_ok());
    }
}
