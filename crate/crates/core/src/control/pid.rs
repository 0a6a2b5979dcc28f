use serde::{Deserialize, Serialize};

use super::ControlError;

/// How the Jacobian element scales the proportional boost.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum JacobianGainMode {
    /// `kp + kg·|jz|`: the boost never lowers the gain.
    #[default]
    Unsigned,
    /// `kp + kg·jz`, as printed.
    Signed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PidGains {
    pub kp: Vec<f64>,
    pub ki: Vec<f64>,
    pub kd: Vec<f64>,
    /// Gravity-aware gain applied to the tool Jacobian's z row.
    pub kg: f64,
    /// Bound on `|ki·∫e|`, N·m.
    pub integral_limit: f64,
    /// Output saturation, N·m.
    pub torque_limit: f64,
    #[serde(default)]
    pub jacobian_gain: JacobianGainMode,
}

impl PidGains {
    pub fn uniform(dof: usize, kp: f64, ki: f64, kd: f64, kg: f64) -> Self {
        Self {
            kp: vec![kp; dof],
            ki: vec![ki; dof],
            kd: vec![kd; dof],
            kg,
            integral_limit: 60.0,
            torque_limit: 120.0,
            jacobian_gain: JacobianGainMode::Unsigned,
        }
    }

    pub fn validate(&self, dof: usize) -> Result<(), ControlError> {
        if self.kp.len() != dof || self.ki.len() != dof || self.kd.len() != dof {
            return Err(ControlError::Config(format!("gains must have {dof} entries per term")));
        }
        let nonneg = |v: &f64| v.is_finite() && *v >= 0.0;
        if !(self.kp.iter().all(nonneg) && self.ki.iter().all(nonneg) && self.kd.iter().all(nonneg)) {
            return Err(ControlError::Config("kp, ki, kd must be finite and >= 0".into()));
        }
        if !(nonneg(&self.torque_limit) && nonneg(&self.integral_limit) && self.kg.is_finite()) {
            return Err(ControlError::Config("invalid limits or kg".into()));
        }
        Ok(())
    }
}

impl Default for PidGains {
    fn default() -> Self {
        Self::uniform(crate::model::DOF, 80.0, 10.0, 8.0, 40.0)
    }
}

/// `u = (kp + kg·|jz|)·e + ki·∫e + kd·ė`, saturated at the torque limit.
pub fn gravity_aware_pid(
    gains: &PidGains,
    e: &[f64],
    e_int: &[f64],
    e_dot: &[f64],
    jz: &[f64],
) -> Vec<f64> {
    (0..e.len())
        .map(|i| {
            let boost = match gains.jacobian_gain {
                JacobianGainMode::Unsigned => gains.kg * jz[i].abs(),
                JacobianGainMode::Signed => gains.kg * jz[i],
            };
            let u = (gains.kp[i] + boost) * e[i] + gains.ki[i] * e_int[i] + gains.kd[i] * e_dot[i];
            u.clamp(-gains.torque_limit, gains.torque_limit)
        })
        .collect()
}

/// Controller with its integral accumulator.
#[derive(Debug, Clone)]
pub struct PidController {
    gains: PidGains,
    integral: Vec<f64>,
}

impl PidController {
    pub fn new(gains: PidGains) -> Self {
        let n = gains.kp.len();
        Self {
            gains,
            integral: vec![0.0; n],
        }
    }

    pub fn integral(&self) -> &[f64] {
        &self.integral
    }

    /// Accumulates `e·dt` (anti-windup clamped) and returns the torque.
    pub fn update(&mut self, e: &[f64], e_dot: &[f64], jz: &[f64], dt: f64) -> Vec<f64> {
        for (i, acc) in self.integral.iter_mut().enumerate() {
            *acc += e[i] * dt;
            let ki = self.gains.ki[i];
            if ki > 0.0 {
                let bound = self.gains.integral_limit / ki;
                *acc = acc.clamp(-bound, bound);
            }
        }
        gravity_aware_pid(&self.gains, e, &self.integral, e_dot, jz)
    }
}
