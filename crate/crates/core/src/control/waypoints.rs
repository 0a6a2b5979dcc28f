use nalgebra::{DVector, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ControlError, Waypoint};
use crate::dynamics::RigidChain;
use crate::model::RobotModel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaypointConfig {
    pub hold_tolerance: f64,
    pub settle_time: f64,
    pub max_time: f64,
    /// Minimum height of every link frame and the tool point, m.
    pub ground_clearance: f64,
    /// Minimum distance between non-adjacent link segments, m.
    pub self_collision_distance: f64,
    /// Intermediate configurations checked between consecutive waypoints.
    pub interpolation_checks: usize,
    /// Candidate draws allowed per waypoint.
    pub max_tries: usize,
}

impl Default for WaypointConfig {
    fn default() -> Self {
        Self {
            hold_tolerance: 0.02,
            settle_time: 0.2,
            max_time: 4.0,
            ground_clearance: 0.05,
            self_collision_distance: 0.04,
            interpolation_checks: 16,
            max_tries: 1000,
        }
    }
}

impl WaypointConfig {
    pub fn validate(&self) -> Result<(), ControlError> {
        let ok = self.hold_tolerance > 0.0
            && self.settle_time >= 0.0
            && self.max_time > 0.0
            && self.ground_clearance.is_finite()
            && self.self_collision_distance >= 0.0
            && self.max_tries >= 1;
        if ok {
            Ok(())
        } else {
            Err(ControlError::Config("invalid waypoint configuration".into()))
        }
    }
}

/// Shortest distance between segments `[p0, p1]` and `[q0, q1]`.
pub fn segment_distance(
    p0: &Vector3<f64>,
    p1: &Vector3<f64>,
    q0: &Vector3<f64>,
    q1: &Vector3<f64>,
) -> f64 {
    let d1 = p1 - p0;
    let d2 = q1 - q0;
    let r = p0 - q0;
    let a = d1.dot(&d1);
    let e = d2.dot(&d2);
    let f = d2.dot(&r);
    let eps = 1e-18;
    let (s, t) = if a <= eps && e <= eps {
        (0.0, 0.0)
    } else if a <= eps {
        (0.0, (f / e).clamp(0.0, 1.0))
    } else {
        let c = d1.dot(&r);
        if e <= eps {
            ((-c / a).clamp(0.0, 1.0), 0.0)
        } else {
            let b = d1.dot(&d2);
            let denom = a * e - b * b;
            let mut s = if denom > eps {
                ((b * f - c * e) / denom).clamp(0.0, 1.0)
            } else {
                0.0
            };
            let mut t = (b * s + f) / e;
            if t < 0.0 {
                t = 0.0;
                s = (-c / a).clamp(0.0, 1.0);
            } else if t > 1.0 {
                t = 1.0;
                s = ((b - c) / a).clamp(0.0, 1.0);
            }
            (s, t)
        }
    };
    ((p0 + d1 * s) - (q0 + d2 * t)).norm()
}

/// Segment endpoints: the fixed pedestal, then one segment per link.
fn skeleton(chain: &RigidChain, q: &DVector<f64>) -> Vec<Vector3<f64>> {
    let kin = chain.kinematics(q);
    let mut pts = Vec::with_capacity(kin.origin.len() + 2);
    pts.push(Vector3::zeros());
    pts.extend(kin.origin.iter().copied());
    pts.push(chain.tool_position(&kin));
    pts
}

/// Ground clearance and self-collision proxy for one configuration.
pub fn is_collision_free(chain: &RigidChain, q: &DVector<f64>, cfg: &WaypointConfig) -> bool {
    let pts = skeleton(chain, q);
    // pts[1] is the first joint, fixed on the pedestal.
    if pts[2..].iter().any(|p| p.z <= cfg.ground_clearance) {
        return false;
    }
    let segs = pts.len() - 1;
    for i in 0..segs {
        for j in (i + 2)..segs {
            let d = segment_distance(&pts[i], &pts[i + 1], &pts[j], &pts[j + 1]);
            if d <= cfg.self_collision_distance {
                return false;
            }
        }
    }
    true
}

fn path_is_clear(
    chain: &RigidChain,
    from: &DVector<f64>,
    to: &DVector<f64>,
    cfg: &WaypointConfig,
) -> bool {
    let k = cfg.interpolation_checks;
    (1..=k).all(|i| {
        let s = i as f64 / (k + 1) as f64;
        is_collision_free(chain, &from.lerp(to, s), cfg)
    }) && is_collision_free(chain, to, cfg)
}

/// Draws `n` joint-space targets uniformly within limits, each reachable
/// from its predecessor (the rest pose for the first) along a collision-free
/// straight line.
pub fn sample_waypoints(
    model: &RobotModel,
    n: usize,
    seed: u64,
    cfg: &WaypointConfig,
) -> Result<Vec<Waypoint>, ControlError> {
    if n == 0 {
        return Err(ControlError::Config("waypoint count must be at least 1".into()));
    }
    cfg.validate()?;
    let chain = RigidChain::new(model);
    let limits = model.joint_limits();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut prev = DVector::zeros(chain.dof());
    let mut out = Vec::with_capacity(n);
    for index in 0..n {
        let mut accepted = None;
        for _ in 0..cfg.max_tries {
            let cand = DVector::from_iterator(
                limits.len(),
                limits.iter().map(|&(lo, hi)| lo + (hi - lo) * rng.random::<f64>()),
            );
            if path_is_clear(&chain, &prev, &cand, cfg) {
                accepted = Some(cand);
                break;
            }
        }
        let q = accepted.ok_or(ControlError::InfeasibleWorkspace {
            index,
            tries: cfg.max_tries,
        })?;
        out.push(Waypoint {
            q_target: q.as_slice().to_vec(),
            hold_tolerance: cfg.hold_tolerance,
            settle_time: cfg.settle_time,
            max_time: cfg.max_time,
        });
        prev = q;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{generate_robot, KinematicTemplate, VariationRanges};

    fn v(x: f64, y: f64, z: f64) -> Vector3<f64> {
        Vector3::new(x, y, z)
    }

    #[test]
    fn segment_distance_cases() {
        let o = v(0.0, 0.0, 0.0);
        // parallel, offset by 1
        assert!((segment_distance(&o, &v(1.0, 0.0, 0.0), &v(0.0, 1.0, 0.0), &v(1.0, 1.0, 0.0)) - 1.0).abs() < 1e-12);
        // crossing
        assert!(segment_distance(&v(-1.0, 0.0, 0.0), &v(1.0, 0.0, 0.0), &v(0.0, -1.0, 0.0), &v(0.0, 1.0, 0.0)) < 1e-12);
        // skew lines, closest points interior
        assert!((segment_distance(&v(-1.0, 0.0, 0.0), &v(1.0, 0.0, 0.0), &v(0.0, -1.0, 2.0), &v(0.0, 1.0, 2.0)) - 2.0).abs() < 1e-12);
        // endpoint to endpoint
        let d = segment_distance(&o, &v(1.0, 0.0, 0.0), &v(2.0, 1.0, 0.0), &v(3.0, 1.0, 0.0));
        assert!((d - 2f64.sqrt()).abs() < 1e-12);
        // degenerate points
        assert!((segment_distance(&o, &o, &v(0.0, 3.0, 4.0), &v(0.0, 3.0, 4.0)) - 5.0).abs() < 1e-12);
    }

    #[test]
    fn rest_pose_is_clear() {
        let m = generate_robot(1, &KinematicTemplate::default(), &VariationRanges::default()).unwrap();
        let chain = RigidChain::new(&m);
        assert!(is_collision_free(&chain, &DVector::zeros(6), &WaypointConfig::default()));
    }

    #[test]
    fn folded_into_ground_is_rejected() {
        let m = generate_robot(1, &KinematicTemplate::default(), &VariationRanges::default()).unwrap();
        let chain = RigidChain::new(&m);
        let q = DVector::from_vec(vec![0.0, 1.9, 0.0, 0.0, 0.0, 0.0]);
        assert!(!is_collision_free(&chain, &q, &WaypointConfig::default()));
    }

    #[test]
    fn sampling_is_deterministic_and_counted() {
        let m = generate_robot(3, &KinematicTemplate::default(), &VariationRanges::default()).unwrap();
        let cfg = WaypointConfig::default();
        let a = sample_waypoints(&m, 16, 5, &cfg).unwrap();
        let b = sample_waypoints(&m, 16, 5, &cfg).unwrap();
        assert_eq!(a.len(), 16);
        assert_eq!(a, b);
        let limits = m.joint_limits();
        for w in &a {
            for (q, (lo, hi)) in w.q_target.iter().zip(&limits) {
                assert!(q >= lo && q <= hi);
            }
        }
    }

    #[test]
    fn impossible_clearance_is_infeasible() {
        let m = generate_robot(3, &KinematicTemplate::default(), &VariationRanges::default()).unwrap();
        let cfg = WaypointConfig {
            ground_clearance: 5.0,
            max_tries: 20,
            ..Default::default()
        };
        assert!(matches!(
            sample_waypoints(&m, 2, 0, &cfg),
            Err(ControlError::InfeasibleWorkspace { index: 0, tries: 20 })
        ));
    }
}
