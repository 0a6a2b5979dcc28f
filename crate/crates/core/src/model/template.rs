use serde::{Deserialize, Serialize};

use super::{ModelError, DOF};

/// Fixed kinematic and drive description of one joint.
///
/// `origin_*` place the joint frame in the parent link frame (URDF
/// convention, rpy applied as `Rz(yaw)·Ry(pitch)·Rx(roll)`), `axis` is
/// expressed in the joint frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointTemplate {
    pub axis: [f64; 3],
    pub origin_xyz: [f64; 3],
    pub origin_rpy: [f64; 3],
    pub lower: f64,
    pub upper: f64,
    /// Reflected rotor inertia added to the joint-space mass matrix, kg·m².
    pub armature: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KinematicTemplate {
    pub joints: Vec<JointTemplate>,
    /// Length of each moving link along its local z axis.
    pub link_lengths: Vec<f64>,
}

impl KinematicTemplate {
    pub fn dof(&self) -> usize {
        self.joints.len()
    }

    /// Six-axis anthropomorphic arm: base yaw, shoulder and elbow pitch,
    /// then a roll-pitch-roll wrist. Every link extends along its local z,
    /// so the arm stands upright at `q = 0`.
    pub fn anthropomorphic() -> Self {
        use std::f64::consts::PI;
        let lengths = [0.15, 0.40, 0.35, 0.10, 0.10, 0.08];
        let z = [0.0, 0.0, 1.0];
        let y = [0.0, 1.0, 0.0];
        let axes = [z, y, y, z, y, z];
        let limits = [(-PI, PI), (-1.9, 1.9), (-2.5, 2.5), (-PI, PI), (-2.0, 2.0), (-PI, PI)];
        let joints = (0..DOF)
            .map(|i| JointTemplate {
                axis: axes[i],
                origin_xyz: [0.0, 0.0, if i == 0 { 0.10 } else { lengths[i - 1] }],
                origin_rpy: [0.0; 3],
                lower: limits[i].0,
                upper: limits[i].1,
                armature: 0.02,
            })
            .collect();
        Self {
            joints,
            link_lengths: lengths.to_vec(),
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.joints.is_empty() {
            return Err(ModelError::Template("template has no joints".into()));
        }
        if self.joints.len() != self.link_lengths.len() {
            return Err(ModelError::Template(format!(
                "{} joints but {} link lengths",
                self.joints.len(),
                self.link_lengths.len()
            )));
        }
        for (i, j) in self.joints.iter().enumerate() {
            let all_finite = j
                .axis
                .iter()
                .chain(&j.origin_xyz)
                .chain(&j.origin_rpy)
                .chain([&j.lower, &j.upper, &j.armature])
                .all(|v| v.is_finite());
            if !all_finite {
                return Err(ModelError::Template(format!("joint {}: non-finite field", i + 1)));
            }
            let norm = j.axis.iter().map(|a| a * a).sum::<f64>().sqrt();
            if (norm - 1.0).abs() > 1e-9 {
                return Err(ModelError::Template(format!(
                    "joint {}: axis norm {norm} is not 1",
                    i + 1
                )));
            }
            if j.lower >= j.upper {
                return Err(ModelError::Template(format!(
                    "joint {}: lower limit {} >= upper limit {}",
                    i + 1,
                    j.lower,
                    j.upper
                )));
            }
            if j.armature < 0.0 {
                return Err(ModelError::Template(format!("joint {}: negative armature", i + 1)));
            }
        }
        if let Some(bad) = self.link_lengths.iter().position(|l| !(l.is_finite() && *l > 0.0)) {
            return Err(ModelError::Template(format!(
                "link {} length {} must be positive",
                bad + 1,
                self.link_lengths[bad]
            )));
        }
        Ok(())
    }
}

impl Default for KinematicTemplate {
    fn default() -> Self {
        Self::anthropomorphic()
    }
}
