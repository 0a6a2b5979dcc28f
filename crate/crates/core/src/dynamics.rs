//! Rigid-body dynamics of a serial revolute chain.
//!
//! All quantities are evaluated in the world frame. The mass matrix comes
//! from the composite-rigid-body algorithm on spatial inertias taken about
//! the world origin; inverse dynamics is a recursive Newton-Euler pass. The
//! two share only the forward kinematics, so each can check the other.

use nalgebra::{DMatrix, DVector, Matrix3, Matrix6, Rotation3, Vector3, Vector6};
use thiserror::Error;

use crate::model::{KinematicTemplate, RobotModel};

/// Gravity used throughout unless configured otherwise, m/s².
pub const STANDARD_GRAVITY: [f64; 3] = [0.0, 0.0, -9.81];
/// Velocity scale of the smoothed Coulomb sign, rad/s.
pub const FRICTION_EPSILON: f64 = 1e-3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("mass matrix is not positive definite (degenerate inertia?)")]
    IllConditioned,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("frame index {0} out of range")]
    Frame(usize),
    #[error("time step must be positive, got {0}")]
    TimeStep(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct JointState {
    pub q: DVector<f64>,
    pub qd: DVector<f64>,
}

impl JointState {
    pub fn new(q: DVector<f64>, qd: DVector<f64>) -> Self {
        Self { q, qd }
    }

    pub fn rest(dof: usize) -> Self {
        Self {
            q: DVector::zeros(dof),
            qd: DVector::zeros(dof),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.q.iter().chain(self.qd.iter()).all(|v| v.is_finite())
    }
}

/// World pose of a link frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkPose {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

/// 6×n geometric Jacobian, rows `[vx, vy, vz, wx, wy, wz]`.
pub type Jacobian = DMatrix<f64>;

#[derive(Debug, Clone, PartialEq)]
pub struct DynTerms {
    pub mass: DMatrix<f64>,
    /// `C(q, qd)·qd + G(q)`.
    pub bias: DVector<f64>,
    pub gravity: DVector<f64>,
}

/// Per-configuration kinematic quantities, indexed by link (0-based).
#[derive(Debug, Clone)]
pub struct ChainKinematics {
    pub rotation: Vec<Matrix3<f64>>,
    /// Joint (and link frame) origin.
    pub origin: Vec<Vector3<f64>>,
    /// Joint axis in world coordinates.
    pub axis: Vec<Vector3<f64>>,
    pub com: Vec<Vector3<f64>>,
}

#[derive(Debug, Clone)]
struct Body {
    origin_rotation: Matrix3<f64>,
    origin_translation: Vector3<f64>,
    axis: Vector3<f64>,
    mass: f64,
    com: Vector3<f64>,
    inertia: Vector3<f64>,
    armature: f64,
    mu_c: f64,
    mu_v: f64,
    lower: f64,
    upper: f64,
}

/// A [`RobotModel`] flattened into the constants the algorithms need.
#[derive(Debug, Clone)]
pub struct RigidChain {
    bodies: Vec<Body>,
    tool_point: Vector3<f64>,
}

fn vec3(v: [f64; 3]) -> Vector3<f64> {
    Vector3::new(v[0], v[1], v[2])
}

fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

fn check_len(expected: usize, got: usize) -> Result<(), DynamicsError> {
    if expected == got {
        Ok(())
    } else {
        Err(DynamicsError::Dimension { expected, got })
    }
}

impl RigidChain {
    pub fn new(model: &RobotModel) -> Self {
        let bodies = model
            .template
            .joints
            .iter()
            .zip(&model.links)
            .zip(&model.joints)
            .map(|((jt, link), js)| {
                let [roll, pitch, yaw] = jt.origin_rpy;
                Body {
                    origin_rotation: *Rotation3::from_euler_angles(roll, pitch, yaw).matrix(),
                    origin_translation: vec3(jt.origin_xyz),
                    axis: vec3(jt.axis),
                    mass: link.mass,
                    com: vec3(link.com_position()),
                    inertia: vec3(link.inertia),
                    armature: jt.armature,
                    mu_c: js.mu_c,
                    mu_v: js.mu_v,
                    lower: jt.lower,
                    upper: jt.upper,
                }
            })
            .collect();
        let tip = model.links.last().map_or(0.0, |l| l.length);
        Self {
            bodies,
            tool_point: Vector3::new(0.0, 0.0, tip),
        }
    }

    /// Chain with the template's kinematics and massless links. Only the
    /// kinematic queries are meaningful.
    pub fn from_template(template: &KinematicTemplate) -> Self {
        let bodies = template
            .joints
            .iter()
            .map(|jt| {
                let [roll, pitch, yaw] = jt.origin_rpy;
                Body {
                    origin_rotation: *Rotation3::from_euler_angles(roll, pitch, yaw).matrix(),
                    origin_translation: vec3(jt.origin_xyz),
                    axis: vec3(jt.axis),
                    mass: 0.0,
                    com: Vector3::zeros(),
                    inertia: Vector3::zeros(),
                    armature: jt.armature,
                    mu_c: 0.0,
                    mu_v: 0.0,
                    lower: jt.lower,
                    upper: jt.upper,
                }
            })
            .collect();
        let tip = template.link_lengths.last().copied().unwrap_or(0.0);
        Self {
            bodies,
            tool_point: Vector3::new(0.0, 0.0, tip),
        }
    }

    pub fn dof(&self) -> usize {
        self.bodies.len()
    }

    pub fn kinematics(&self, q: &DVector<f64>) -> ChainKinematics {
        let n = self.dof();
        let mut out = ChainKinematics {
            rotation: Vec::with_capacity(n),
            origin: Vec::with_capacity(n),
            axis: Vec::with_capacity(n),
            com: Vec::with_capacity(n),
        };
        let mut rot = Matrix3::identity();
        let mut pos = Vector3::zeros();
        for (b, &qi) in self.bodies.iter().zip(q.iter()) {
            pos += rot * b.origin_translation;
            rot *= b.origin_rotation;
            let axis_w = rot * b.axis;
            let joint_rot = Rotation3::from_axis_angle(&nalgebra::Unit::new_unchecked(b.axis), qi);
            rot *= joint_rot.matrix();
            out.rotation.push(rot);
            out.origin.push(pos);
            out.axis.push(axis_w);
            out.com.push(pos + rot * b.com);
        }
        out
    }

    /// Base pose followed by one pose per link.
    pub fn forward_kinematics(&self, q: &DVector<f64>) -> Vec<LinkPose> {
        let kin = self.kinematics(q);
        std::iter::once(LinkPose {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        })
        .chain(kin.rotation.iter().zip(&kin.origin).map(|(r, p)| LinkPose {
            rotation: *r,
            translation: *p,
        }))
        .collect()
    }

    /// Tool point at the far end of the last link, world frame.
    pub fn tool_position(&self, kin: &ChainKinematics) -> Vector3<f64> {
        match (kin.origin.last(), kin.rotation.last()) {
            (Some(p), Some(r)) => p + r * self.tool_point,
            _ => Vector3::zeros(),
        }
    }

    /// Jacobian of a world point rigidly attached to link `link` (0-based).
    pub fn point_jacobian(&self, kin: &ChainKinematics, link: usize, point: &Vector3<f64>) -> Jacobian {
        let n = self.dof();
        let mut jac = DMatrix::zeros(6, n);
        for j in 0..=link.min(n.saturating_sub(1)) {
            let z = kin.axis[j];
            let lin = z.cross(&(point - kin.origin[j]));
            for r in 0..3 {
                jac[(r, j)] = lin[r];
                jac[(r + 3, j)] = z[r];
            }
        }
        jac
    }

    /// Jacobian of the origin of frame `frame` (0 = base, `k` = link `k`).
    pub fn jacobian(&self, q: &DVector<f64>, frame: usize) -> Result<Jacobian, DynamicsError> {
        let n = self.dof();
        if frame > n {
            return Err(DynamicsError::Frame(frame));
        }
        if frame == 0 {
            return Ok(DMatrix::zeros(6, n));
        }
        let kin = self.kinematics(q);
        Ok(self.point_jacobian(&kin, frame - 1, &kin.origin[frame - 1]))
    }

    /// Jacobian of the tool point.
    pub fn tool_jacobian(&self, kin: &ChainKinematics) -> Jacobian {
        let n = self.dof();
        if n == 0 {
            return DMatrix::zeros(6, 0);
        }
        self.point_jacobian(kin, n - 1, &self.tool_position(kin))
    }

    fn world_inertia(&self, kin: &ChainKinematics, i: usize) -> Matrix3<f64> {
        let r = kin.rotation[i];
        r * Matrix3::from_diagonal(&self.bodies[i].inertia) * r.transpose()
    }

    /// Joint-space inertia by the composite-rigid-body algorithm, armature included.
    pub fn mass_matrix_at(&self, kin: &ChainKinematics) -> DMatrix<f64> {
        let n = self.dof();
        let motion: Vec<Vector6<f64>> = (0..n)
            .map(|i| {
                let z = kin.axis[i];
                let v = kin.origin[i].cross(&z);
                Vector6::new(z.x, z.y, z.z, v.x, v.y, v.z)
            })
            .collect();
        let mut composite = Matrix6::zeros();
        let mut mass = DMatrix::zeros(n, n);
        for i in (0..n).rev() {
            let b = &self.bodies[i];
            let c = skew(&kin.com[i]);
            let ic = self.world_inertia(kin, i);
            let mut spatial = Matrix6::zeros();
            spatial
                .fixed_view_mut::<3, 3>(0, 0)
                .copy_from(&(ic + b.mass * c * c.transpose()));
            spatial.fixed_view_mut::<3, 3>(0, 3).copy_from(&(b.mass * c));
            spatial
                .fixed_view_mut::<3, 3>(3, 0)
                .copy_from(&(b.mass * c.transpose()));
            spatial
                .fixed_view_mut::<3, 3>(3, 3)
                .copy_from(&(b.mass * Matrix3::identity()));
            composite += spatial;
            let force = composite * motion[i];
            for j in 0..=i {
                let m = motion[j].dot(&force);
                mass[(i, j)] = m;
                mass[(j, i)] = m;
            }
            mass[(i, i)] += b.armature;
        }
        mass
    }

    /// Recursive Newton-Euler inverse dynamics, friction excluded.
    pub fn rnea_at(
        &self,
        kin: &ChainKinematics,
        qd: &DVector<f64>,
        qdd: &DVector<f64>,
        gravity: &Vector3<f64>,
    ) -> DVector<f64> {
        let n = self.dof();
        let mut forces = Vec::with_capacity(n);
        let mut moments = Vec::with_capacity(n);
        let mut omega = Vector3::zeros();
        let mut alpha = Vector3::zeros();
        let mut acc = -gravity;
        let mut prev = Vector3::zeros();
        for i in 0..n {
            let z = kin.axis[i];
            let p = kin.origin[i];
            let r = p - prev;
            acc += alpha.cross(&r) + omega.cross(&omega.cross(&r));
            let spin = z * qd[i];
            alpha += z * qdd[i] + omega.cross(&spin);
            omega += spin;
            let c = kin.com[i] - p;
            let acc_com = acc + alpha.cross(&c) + omega.cross(&omega.cross(&c));
            let iw = self.world_inertia(kin, i);
            forces.push(self.bodies[i].mass * acc_com);
            moments.push(iw * alpha + omega.cross(&(iw * omega)));
            prev = p;
        }
        let mut tau = DVector::zeros(n);
        let mut f_next = Vector3::zeros();
        let mut n_next = Vector3::zeros();
        for i in (0..n).rev() {
            let p = kin.origin[i];
            let lever_next = if i + 1 < n { kin.origin[i + 1] - p } else { Vector3::zeros() };
            let f = forces[i] + f_next;
            let m = moments[i] + (kin.com[i] - p).cross(&forces[i]) + n_next + lever_next.cross(&f_next);
            tau[i] = kin.axis[i].dot(&m) + self.bodies[i].armature * qdd[i];
            f_next = f;
            n_next = m;
        }
        tau
    }

    pub fn mass_matrix(&self, q: &DVector<f64>) -> DMatrix<f64> {
        self.mass_matrix_at(&self.kinematics(q))
    }

    pub fn inverse_dynamics(
        &self,
        q: &DVector<f64>,
        qd: &DVector<f64>,
        qdd: &DVector<f64>,
        gravity: &Vector3<f64>,
    ) -> DVector<f64> {
        self.rnea_at(&self.kinematics(q), qd, qdd, gravity)
    }

    pub fn dyn_terms(&self, q: &DVector<f64>, qd: &DVector<f64>, gravity: &Vector3<f64>) -> DynTerms {
        let kin = self.kinematics(q);
        let zero = DVector::zeros(self.dof());
        DynTerms {
            mass: self.mass_matrix_at(&kin),
            bias: self.rnea_at(&kin, qd, &zero, gravity),
            gravity: self.rnea_at(&kin, &zero, &zero, gravity),
        }
    }

    pub fn friction(&self, qd: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(
            self.dof(),
            self.bodies
                .iter()
                .zip(qd.iter())
                .map(|(b, &v)| smooth_friction(b.mu_c, b.mu_v, v)),
        )
    }

    /// `qdd = M⁻¹ (τ − bias − friction)` via Cholesky.
    pub fn forward_dynamics(
        &self,
        state: &JointState,
        tau: &DVector<f64>,
        gravity: &Vector3<f64>,
    ) -> Result<DVector<f64>, DynamicsError> {
        let n = self.dof();
        check_len(n, state.q.len())?;
        check_len(n, state.qd.len())?;
        check_len(n, tau.len())?;
        let kin = self.kinematics(&state.q);
        let zero = DVector::zeros(n);
        let mass = self.mass_matrix_at(&kin);
        let rhs = tau - self.rnea_at(&kin, &state.qd, &zero, gravity) - self.friction(&state.qd);
        let chol = mass.cholesky().ok_or(DynamicsError::IllConditioned)?;
        Ok(chol.solve(&rhs))
    }

    /// Semi-implicit Euler step with the friction evaluated at the new velocity.
    ///
    /// The velocity update solves `M (v' − v) = dt (τ − bias − f(v'))` by a
    /// damped Newton iteration (the residual is the gradient of a strictly
    /// convex function), then `q' = q + dt·v'` and joints that leave their
    /// limits are clamped with zero velocity.
    pub fn step(
        &self,
        state: &JointState,
        tau: &DVector<f64>,
        dt: f64,
        gravity: &Vector3<f64>,
    ) -> Result<JointState, DynamicsError> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(DynamicsError::TimeStep(dt));
        }
        let n = self.dof();
        check_len(n, state.q.len())?;
        check_len(n, state.qd.len())?;
        check_len(n, tau.len())?;
        let kin = self.kinematics(&state.q);
        let zero = DVector::zeros(n);
        let mass = self.mass_matrix_at(&kin);
        let drive = tau - self.rnea_at(&kin, &state.qd, &zero, gravity);
        let qd = self.implicit_velocity(&mass, &state.qd, &drive, dt)?;

        let mut q = &state.q + &qd * dt;
        let mut qd = qd;
        for (i, b) in self.bodies.iter().enumerate() {
            if q[i] < b.lower {
                q[i] = b.lower;
                qd[i] = 0.0;
            } else if q[i] > b.upper {
                q[i] = b.upper;
                qd[i] = 0.0;
            }
        }
        Ok(JointState { q, qd })
    }

    fn implicit_velocity(
        &self,
        mass: &DMatrix<f64>,
        v0: &DVector<f64>,
        drive: &DVector<f64>,
        dt: f64,
    ) -> Result<DVector<f64>, DynamicsError> {
        let n = self.dof();
        let frictionless = self.bodies.iter().all(|b| b.mu_c == 0.0 && b.mu_v == 0.0);
        let chol = mass.clone().cholesky().ok_or(DynamicsError::IllConditioned)?;
        if frictionless {
            return Ok(v0 + chol.solve(&(drive * dt)));
        }

        let objective = |v: &DVector<f64>| {
            let dv = v - v0;
            let mut phi = 0.5 * dv.dot(&(mass * &dv)) - dt * drive.dot(v);
            for (b, &vi) in self.bodies.iter().zip(v.iter()) {
                phi += dt * friction_potential(b.mu_c, b.mu_v, vi);
            }
            phi
        };

        let mut v = v0.clone();
        let mut phi = objective(&v);
        for _ in 0..60 {
            let grad = mass * (&v - v0) + (self.friction(&v) - drive) * dt;
            let mut hess = mass.clone();
            for (i, b) in self.bodies.iter().enumerate() {
                hess[(i, i)] += dt * smooth_friction_slope(b.mu_c, b.mu_v, v[i]);
            }
            let step = hess
                .cholesky()
                .ok_or(DynamicsError::IllConditioned)?
                .solve(&grad);
            let decrement = grad.dot(&step);
            if !(decrement > 1e-30) {
                break;
            }
            let mut t = 1.0;
            let mut accepted = false;
            for _ in 0..40 {
                let trial = &v - &step * t;
                let phi_trial = objective(&trial);
                if phi_trial <= phi - 0.25 * t * decrement {
                    v = trial;
                    phi = phi_trial;
                    accepted = true;
                    break;
                }
                t *= 0.5;
            }
            let size = step.amax() * t;
            if !accepted || size <= 1e-15 * (1.0 + v.amax()) {
                break;
            }
        }
        if v.iter().any(|x| !x.is_finite()) || v.len() != n {
            return Err(DynamicsError::IllConditioned);
        }
        Ok(v)
    }

    pub fn kinetic_energy(&self, state: &JointState) -> f64 {
        0.5 * state.qd.dot(&(self.mass_matrix(&state.q) * &state.qd))
    }

    /// Potential energy relative to the world `z = 0` plane.
    pub fn potential_energy(&self, q: &DVector<f64>, gravity: &Vector3<f64>) -> f64 {
        let kin = self.kinematics(q);
        -self
            .bodies
            .iter()
            .zip(&kin.com)
            .map(|(b, c)| b.mass * gravity.dot(c))
            .sum::<f64>()
    }

    pub fn total_energy(&self, state: &JointState, gravity: &Vector3<f64>) -> f64 {
        self.kinetic_energy(state) + self.potential_energy(&state.q, gravity)
    }

    pub fn limits(&self) -> Vec<(f64, f64)> {
        self.bodies.iter().map(|b| (b.lower, b.upper)).collect()
    }
}

/// `μc·tanh(v/ε) + μv·v`.
pub fn smooth_friction(mu_c: f64, mu_v: f64, v: f64) -> f64 {
    mu_c * (v / FRICTION_EPSILON).tanh() + mu_v * v
}

fn smooth_friction_slope(mu_c: f64, mu_v: f64, v: f64) -> f64 {
    let t = (v / FRICTION_EPSILON).tanh();
    mu_c * (1.0 - t * t) / FRICTION_EPSILON + mu_v
}

/// Antiderivative of [`smooth_friction`] in `v`.
fn friction_potential(mu_c: f64, mu_v: f64, v: f64) -> f64 {
    let x = (v / FRICTION_EPSILON).abs();
    let log_cosh = x + (-2.0 * x).exp().ln_1p() - std::f64::consts::LN_2;
    mu_c * FRICTION_EPSILON * log_cosh + 0.5 * mu_v * v * v
}

pub fn friction_torque(joint: &crate::model::JointSpec, qd: f64) -> f64 {
    smooth_friction(joint.mu_c, joint.mu_v, qd)
}

pub fn forward_kinematics(model: &RobotModel, q: &DVector<f64>) -> Vec<LinkPose> {
    RigidChain::new(model).forward_kinematics(q)
}

pub fn jacobian(model: &RobotModel, q: &DVector<f64>, frame: usize) -> Result<Jacobian, DynamicsError> {
    RigidChain::new(model).jacobian(q, frame)
}

pub fn mass_matrix(model: &RobotModel, q: &DVector<f64>) -> DMatrix<f64> {
    RigidChain::new(model).mass_matrix(q)
}

pub fn inverse_dynamics(
    model: &RobotModel,
    q: &DVector<f64>,
    qd: &DVector<f64>,
    qdd: &DVector<f64>,
    gravity: &Vector3<f64>,
) -> DVector<f64> {
    RigidChain::new(model).inverse_dynamics(q, qd, qdd, gravity)
}

pub fn forward_dynamics(
    model: &RobotModel,
    state: &JointState,
    tau: &DVector<f64>,
    gravity: &Vector3<f64>,
) -> Result<DVector<f64>, DynamicsError> {
    RigidChain::new(model).forward_dynamics(state, tau, gravity)
}

pub fn step(
    model: &RobotModel,
    state: &JointState,
    tau: &DVector<f64>,
    dt: f64,
    gravity: &Vector3<f64>,
) -> Result<JointState, DynamicsError> {
    RigidChain::new(model).step(state, tau, dt, gravity)
}

pub fn standard_gravity() -> Vector3<f64> {
    vec3(STANDARD_GRAVITY)
}
