//! Waypoint-following episodes under per-joint PID control.

mod log_io;
mod pid;
mod waypoints;

pub use log_io::{read_log, summary_line, write_log};
pub use pid::{gravity_aware_pid, JacobianGainMode, PidController, PidGains};
pub use waypoints::{is_collision_free, sample_waypoints, segment_distance, WaypointConfig};

use nalgebra::{DVector, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{RigidChain, STANDARD_GRAVITY};
use crate::model::RobotModel;

#[derive(Debug, Error)]
pub enum ControlError {
    #[error("no feasible configuration for waypoint {index} after {tries} tries")]
    InfeasibleWorkspace { index: usize, tries: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("log format: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    pub q_target: Vec<f64>,
    /// Hold band on `|e|∞`, rad.
    pub hold_tolerance: f64,
    /// Time the error must stay inside the band, s.
    pub settle_time: f64,
    /// Budget before the waypoint is abandoned, s.
    pub max_time: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EpisodeStatus {
    Ok,
    NaNDetected,
    Diverged,
    Timeout,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WaypointOutcome {
    Settled,
    TimedOut,
    /// The episode stopped early (non-finite state or divergence).
    Aborted,
}

/// One episode sampled at `dt`, stored column-wise per channel.
///
/// Frame `k` holds the state at `t = k·dt` and the torque applied over
/// `[t, t + dt)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryLog {
    pub robot_id: u64,
    pub dt: f64,
    pub dof: usize,
    pub q: Vec<f64>,
    pub qd: Vec<f64>,
    pub tau: Vec<f64>,
    /// Index of the waypoint being tracked at each frame.
    pub active: Vec<u16>,
    pub waypoints: Vec<Waypoint>,
    pub outcomes: Vec<WaypointOutcome>,
    pub status: EpisodeStatus,
}

impl TrajectoryLog {
    pub fn new(robot_id: u64, dt: f64, dof: usize, waypoints: Vec<Waypoint>) -> Self {
        Self {
            robot_id,
            dt,
            dof,
            q: Vec::new(),
            qd: Vec::new(),
            tau: Vec::new(),
            active: Vec::new(),
            waypoints,
            outcomes: Vec::new(),
            status: EpisodeStatus::Ok,
        }
    }

    pub fn len(&self) -> usize {
        self.active.len()
    }

    pub fn is_empty(&self) -> bool {
        self.active.is_empty()
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.dt
    }

    pub fn q(&self, k: usize) -> &[f64] {
        &self.q[k * self.dof..(k + 1) * self.dof]
    }

    pub fn qd(&self, k: usize) -> &[f64] {
        &self.qd[k * self.dof..(k + 1) * self.dof]
    }

    pub fn tau(&self, k: usize) -> &[f64] {
        &self.tau[k * self.dof..(k + 1) * self.dof]
    }

    pub fn push(&mut self, q: &[f64], qd: &[f64], tau: &[f64], active: u16) {
        self.q.extend_from_slice(q);
        self.qd.extend_from_slice(qd);
        self.tau.extend_from_slice(tau);
        self.active.push(active);
    }

    pub fn duration(&self) -> f64 {
        self.len() as f64 * self.dt
    }
}

/// Thresholds used to classify an episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureLimits {
    pub velocity_ceiling: f64,
    /// Allowed excursion beyond a joint limit, rad.
    pub limit_margin: f64,
    pub joint_limits: Vec<(f64, f64)>,
}

impl FailureLimits {
    pub fn for_model(model: &RobotModel) -> Self {
        Self {
            velocity_ceiling: 50.0,
            limit_margin: 1e-6,
            joint_limits: model.joint_limits(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub dt: f64,
    pub gravity: [f64; 3],
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            gravity: STANDARD_GRAVITY,
        }
    }
}

pub fn detect_failure(log: &TrajectoryLog, limits: &FailureLimits) -> EpisodeStatus {
    let finite = log
        .q
        .iter()
        .chain(&log.qd)
        .chain(&log.tau)
        .all(|v| v.is_finite());
    if !finite {
        return EpisodeStatus::NaNDetected;
    }
    if log.qd.iter().any(|v| v.abs() > limits.velocity_ceiling) {
        return EpisodeStatus::Diverged;
    }
    let dof = log.dof;
    if dof > 0 && limits.joint_limits.len() == dof {
        let outside = log.q.chunks_exact(dof).any(|q| {
            q.iter().zip(&limits.joint_limits).any(|(v, (lo, hi))| {
                *v < lo - limits.limit_margin || *v > hi + limits.limit_margin
            })
        });
        if outside {
            return EpisodeStatus::Diverged;
        }
    }
    if log.outcomes.contains(&WaypointOutcome::Aborted) {
        return EpisodeStatus::Diverged;
    }
    if !log.outcomes.is_empty() && log.outcomes.iter().all(|o| *o == WaypointOutcome::TimedOut) {
        return EpisodeStatus::Timeout;
    }
    EpisodeStatus::Ok
}

/// Runs one episode from the rest configuration through `waypoints`.
///
/// Dynamics failures end the episode early and surface through the status.
pub fn simulate_trajectory(
    model: &RobotModel,
    waypoints: &[Waypoint],
    gains: &PidGains,
    sim: &SimConfig,
) -> Result<TrajectoryLog, ControlError> {
    let chain = RigidChain::new(model);
    let n = chain.dof();
    gains.validate(n)?;
    if !(sim.dt > 0.0 && sim.dt.is_finite()) {
        return Err(ControlError::Config(format!("dt must be positive, got {}", sim.dt)));
    }
    for (i, w) in waypoints.iter().enumerate() {
        if w.q_target.len() != n {
            return Err(ControlError::Config(format!("waypoint {i} has wrong dimension")));
        }
        if w.max_time <= 0.0 || w.settle_time < 0.0 || w.hold_tolerance <= 0.0 {
            return Err(ControlError::Config(format!("waypoint {i} has invalid timing")));
        }
    }
    let gravity = Vector3::from(sim.gravity);
    let dt = sim.dt;
    let limits = FailureLimits::for_model(model);
    let mut log = TrajectoryLog::new(model.id, dt, n, waypoints.to_vec());
    let mut controller = PidController::new(gains.clone());
    let mut state = crate::dynamics::JointState::rest(n);
    let mut error = vec![0.0; n];
    let mut error_rate = vec![0.0; n];

    'episode: for (w_idx, wp) in waypoints.iter().enumerate() {
        let max_steps = (wp.max_time / dt).round().max(1.0) as usize;
        let settle_steps = (wp.settle_time / dt).round() as usize;
        let mut in_band = 0usize;
        let mut outcome = WaypointOutcome::TimedOut;
        for _ in 0..max_steps {
            let kin = chain.kinematics(&state.q);
            let jz = chain.tool_jacobian(&kin).row(2).transpose();
            for i in 0..n {
                error[i] = wp.q_target[i] - state.q[i];
                error_rate[i] = -state.qd[i];
            }
            let u = controller.update(&error, &error_rate, jz.as_slice(), dt);
            log.push(state.q.as_slice(), state.qd.as_slice(), &u, w_idx as u16);

            let worst = error.iter().fold(0.0f64, |m, e| m.max(e.abs()));
            in_band = if worst < wp.hold_tolerance { in_band + 1 } else { 0 };
            if in_band > settle_steps {
                outcome = WaypointOutcome::Settled;
                break;
            }
            if !u.iter().all(|v| v.is_finite()) {
                log.outcomes.push(WaypointOutcome::Aborted);
                break 'episode;
            }
            match chain.step(&state, &DVector::from_column_slice(&u), dt, &gravity) {
                Ok(next) if next.is_finite() && next.qd.amax() <= limits.velocity_ceiling => {
                    state = next
                }
                _ => {
                    log.outcomes.push(WaypointOutcome::Aborted);
                    break 'episode;
                }
            }
        }
        log.outcomes.push(outcome);
    }
    log.status = detect_failure(&log, &limits);
    Ok(log)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synthetic(qd: f64) -> TrajectoryLog {
        let mut log = TrajectoryLog::new(0, 1e-3, 2, vec![]);
        for _ in 0..10 {
            log.push(&[0.1, 0.2], &[qd, 0.0], &[1.0, -1.0], 0);
        }
        log.outcomes.push(WaypointOutcome::Settled);
        log
    }

    fn limits() -> FailureLimits {
        FailureLimits {
            velocity_ceiling: 50.0,
            limit_margin: 1e-6,
            joint_limits: vec![(-1.0, 1.0); 2],
        }
    }

    #[test]
    fn nan_torque_is_detected() {
        let mut log = synthetic(0.0);
        log.tau[7] = f64::NAN;
        assert_eq!(detect_failure(&log, &limits()), EpisodeStatus::NaNDetected);
    }

    #[test]
    fn settled_finite_log_is_ok() {
        assert_eq!(detect_failure(&synthetic(0.5), &limits()), EpisodeStatus::Ok);
    }

    #[test]
    fn overspeed_is_divergence() {
        assert_eq!(detect_failure(&synthetic(100.0), &limits()), EpisodeStatus::Diverged);
    }

    #[test]
    fn limit_excursion_is_divergence() {
        let mut log = synthetic(0.0);
        log.q[4] = 1.5;
        assert_eq!(detect_failure(&log, &limits()), EpisodeStatus::Diverged);
    }

    #[test]
    fn all_timeouts_is_timeout() {
        let mut log = synthetic(0.0);
        log.outcomes = vec![WaypointOutcome::TimedOut; 3];
        assert_eq!(detect_failure(&log, &limits()), EpisodeStatus::Timeout);
        log.outcomes[1] = WaypointOutcome::Settled;
        assert_eq!(detect_failure(&log, &limits()), EpisodeStatus::Ok);
    }
}
