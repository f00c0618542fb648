//! Differential-drive robot plant in manipulator form.
//!
//! The robot is described by five generalized coordinates
//! `q = [x, y, θ, φ1, φ2]` (planar pose plus wheel angles) with dynamics
//! `M(q)·q̈ + B(q,q̇) − Cᵀ(q)·λ = T` and nonholonomic rolling constraints
//! `C(q)·q̇ = 0`. The same model serves as simulation ground truth and as
//! the controller's prediction model.
//!
//! Sign convention: the constraint matrix couples the first wheel angle
//! with a flipped sign (row 1 carries `+ρ/2, −ρ/2`, row 3 `+ρ/2W, +ρ/2W`),
//! so the right-wheel torque enters its coordinate negated. Equal torques
//! then drive straight-line motion and opposite torques spin in place.

use nalgebra::{Matrix3, Matrix5, SMatrix, Vector2, Vector3, Vector5};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// 3×5 constraint Jacobian type.
pub type ConstraintMatrix = SMatrix<f64, 3, 5>;

/// Reciprocal-condition floor below which the constraint system is
/// treated as numerically singular.
pub const RCOND_FLOOR: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum DynamicsError {
    #[error("constraint system numerically singular (rcond estimate {rcond:.3e})")]
    SingularConstraintSystem { rcond: f64 },
    #[error("invalid robot parameters: {0}")]
    InvalidParams(String),
}

/// Physical parameters of the robot.
///
/// `total_mass` must equal `chassis_mass + 2·wheel_mass`; the chassis yaw
/// inertia is carried for configuration completeness but only the total
/// yaw inertia and wheel spin inertia enter the mass matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RobotParams {
    /// Chassis mass, kg.
    pub chassis_mass: f64,
    /// Single wheel mass, kg.
    pub wheel_mass: f64,
    /// Total mass, kg. Must equal chassis + 2 wheels.
    pub total_mass: f64,
    /// Distance from wheel-axle center to chassis center of mass, m.
    pub chassis_offset: f64,
    /// Wheel radius, m.
    pub wheel_radius: f64,
    /// Half distance between wheel contact points, m.
    pub half_track: f64,
    /// Chassis yaw inertia, kg·m².
    pub chassis_yaw_inertia: f64,
    /// Total yaw inertia, kg·m².
    pub total_yaw_inertia: f64,
    /// Wheel spin inertia about its axle, kg·m².
    pub wheel_spin_inertia: f64,
}

impl Default for RobotParams {
    fn default() -> Self {
        Self {
            chassis_mass: 10.0,
            wheel_mass: 1.0,
            total_mass: 12.0,
            chassis_offset: 0.1,
            wheel_radius: 0.05,
            half_track: 0.2,
            chassis_yaw_inertia: 0.4,
            total_yaw_inertia: 0.5,
            wheel_spin_inertia: 0.005,
        }
    }
}

impl RobotParams {
    pub fn validate(&self) -> Result<(), DynamicsError> {
        let positive = [
            ("chassisMass", self.chassis_mass),
            ("wheelMass", self.wheel_mass),
            ("totalMass", self.total_mass),
            ("chassisOffset", self.chassis_offset),
            ("wheelRadius", self.wheel_radius),
            ("halfTrack", self.half_track),
            ("chassisYawInertia", self.chassis_yaw_inertia),
            ("totalYawInertia", self.total_yaw_inertia),
            ("wheelSpinInertia", self.wheel_spin_inertia),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(DynamicsError::InvalidParams(format!(
                    "{name} must be strictly positive, got {v}"
                )));
            }
        }
        let expected = self.chassis_mass + 2.0 * self.wheel_mass;
        if (self.total_mass - expected).abs() > 1e-12 {
            return Err(DynamicsError::InvalidParams(format!(
                "totalMass {} must equal chassisMass + 2·wheelMass = {expected}",
                self.total_mass
            )));
        }
        Ok(())
    }
}

/// Generalized coordinates and velocities.
///
/// The heading is left unnormalized (continuous winding); consumers wrap
/// heading differences as needed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeneralizedState {
    pub q: Vector5<f64>,
    pub qdot: Vector5<f64>,
}

impl GeneralizedState {
    pub fn new(q: Vector5<f64>, qdot: Vector5<f64>) -> Self {
        Self { q, qdot }
    }

    /// State at rest at a planar pose.
    pub fn at_pose(x: f64, y: f64, heading: f64) -> Self {
        Self {
            q: Vector5::new(x, y, heading, 0.0, 0.0),
            qdot: Vector5::zeros(),
        }
    }

    pub fn position(&self) -> Vector2<f64> {
        Vector2::new(self.q[0], self.q[1])
    }

    pub fn heading(&self) -> f64 {
        self.q[2]
    }

    /// Planar velocity of the axle midpoint in the world frame.
    pub fn planar_velocity(&self) -> Vector2<f64> {
        Vector2::new(self.qdot[0], self.qdot[1])
    }
}

/// Control input: torques on the right and left wheels, N·m.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WheelTorques {
    pub right: f64,
    pub left: f64,
}

impl WheelTorques {
    pub const ZERO: WheelTorques = WheelTorques { right: 0.0, left: 0.0 };

    pub fn new(right: f64, left: f64) -> Self {
        Self { right, left }
    }

    /// Embedding into the 5-dimensional generalized force vector. The
    /// right torque is negated to match the constraint matrix's wheel
    /// sign convention (see module docs).
    pub fn generalized_force(&self) -> Vector5<f64> {
        Vector5::new(0.0, 0.0, 0.0, -self.right, self.left)
    }
}

/// Mass matrix `M(q)`: symmetric positive definite.
pub fn mass_matrix(q: &Vector5<f64>, p: &RobotParams) -> Matrix5<f64> {
    let (s, c) = q[2].sin_cos();
    let a = p.chassis_mass * p.chassis_offset;
    let mt = p.total_mass;
    let it = p.total_yaw_inertia;
    let iw = p.wheel_spin_inertia;
    Matrix5::new(
        mt, 0.0, -a * s, 0.0, 0.0, //
        0.0, mt, a * c, 0.0, 0.0, //
        -a * s, a * c, it, 0.0, 0.0, //
        0.0, 0.0, 0.0, iw, 0.0, //
        0.0, 0.0, 0.0, 0.0, iw,
    )
}

/// Coriolis vector `B(q, q̇) = −m_B·d·θ̇²·[cosθ, sinθ, 0, 0, 0]ᵀ`.
pub fn coriolis_vector(q: &Vector5<f64>, qdot: &Vector5<f64>, p: &RobotParams) -> Vector5<f64> {
    let (s, c) = q[2].sin_cos();
    let f = -p.chassis_mass * p.chassis_offset * qdot[2] * qdot[2];
    Vector5::new(f * c, f * s, 0.0, 0.0, 0.0)
}

/// Constraint Jacobian `C(q)` with rows: wheel rolling, lateral no-slip,
/// heading–wheel coupling.
pub fn constraint_matrix(q: &Vector5<f64>, p: &RobotParams) -> ConstraintMatrix {
    let (s, c) = q[2].sin_cos();
    let half_rho = 0.5 * p.wheel_radius;
    let coupling = p.wheel_radius / (2.0 * p.half_track);
    SMatrix::<f64, 3, 5>::new(
        c, s, 0.0, half_rho, -half_rho, //
        -s, c, 0.0, 0.0, 0.0, //
        0.0, 0.0, 1.0, coupling, coupling,
    )
}

/// Time derivative `Ċ(q)`; only the trigonometric entries vary.
pub fn constraint_matrix_dot(q: &Vector5<f64>, qdot: &Vector5<f64>) -> ConstraintMatrix {
    let (s, c) = q[2].sin_cos();
    let w = qdot[2];
    SMatrix::<f64, 3, 5>::new(
        -s * w, c * w, 0.0, 0.0, 0.0, //
        -c * w, -s * w, 0.0, 0.0, 0.0, //
        0.0, 0.0, 0.0, 0.0, 0.0,
    )
}

/// Inverse mass matrix, exploiting the block structure (coupled planar
/// 3×3 block, diagonal wheel block).
fn mass_matrix_inverse(q: &Vector5<f64>, p: &RobotParams) -> Option<Matrix5<f64>> {
    let (s, c) = q[2].sin_cos();
    let a = p.chassis_mass * p.chassis_offset;
    let mt = p.total_mass;
    let it = p.total_yaw_inertia;
    let planar = Matrix3::new(mt, 0.0, -a * s, 0.0, mt, a * c, -a * s, a * c, it);
    let planar_inv = planar.try_inverse()?;
    let iw_inv = 1.0 / p.wheel_spin_inertia;
    let mut out = Matrix5::zeros();
    out.fixed_view_mut::<3, 3>(0, 0).copy_from(&planar_inv);
    out[(3, 3)] = iw_inv;
    out[(4, 4)] = iw_inv;
    Some(out)
}

fn solve_spd3(
    m: &Matrix3<f64>,
    rhs: &Vector3<f64>,
) -> Result<Vector3<f64>, DynamicsError> {
    let chol = m.cholesky().ok_or(DynamicsError::SingularConstraintSystem {
        rcond: rcond_estimate_spd3(m),
    })?;
    let rcond = {
        let l = chol.l_dirty();
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        for i in 0..3 {
            let d = l[(i, i)] * l[(i, i)];
            lo = lo.min(d);
            hi = hi.max(d);
        }
        lo / hi
    };
    if rcond < RCOND_FLOOR {
        return Err(DynamicsError::SingularConstraintSystem { rcond });
    }
    Ok(chol.solve(rhs))
}

fn rcond_estimate_spd3(m: &Matrix3<f64>) -> f64 {
    let eig = m.symmetric_eigenvalues();
    let hi = eig.iter().cloned().fold(0.0f64, f64::max);
    let lo = eig.iter().cloned().fold(f64::INFINITY, f64::min);
    if hi > 0.0 {
        lo / hi
    } else {
        0.0
    }
}

/// Constraint forces `λ` for a given generalized force vector.
pub fn constraint_forces(
    q: &Vector5<f64>,
    qdot: &Vector5<f64>,
    generalized_force: &Vector5<f64>,
    p: &RobotParams,
) -> Result<Vector3<f64>, DynamicsError> {
    let m_inv = mass_matrix_inverse(q, p).ok_or(DynamicsError::SingularConstraintSystem {
        rcond: 0.0,
    })?;
    let cm = constraint_matrix(q, p);
    let b = coriolis_vector(q, qdot, p);
    let s: Matrix3<f64> = (cm * m_inv * cm.transpose()).into();
    let rhs = cm * (m_inv * (generalized_force - b)) + constraint_matrix_dot(q, qdot) * qdot;
    Ok(-solve_spd3(&s, &rhs.into())?)
}

/// Constrained acceleration `q̈ = M⁻¹(T + Cᵀλ − B)`.
pub fn acceleration(
    q: &Vector5<f64>,
    qdot: &Vector5<f64>,
    torques: &WheelTorques,
    p: &RobotParams,
) -> Result<Vector5<f64>, DynamicsError> {
    let t5 = torques.generalized_force();
    let lambda = constraint_forces(q, qdot, &t5, p)?;
    let m_inv = mass_matrix_inverse(q, p).ok_or(DynamicsError::SingularConstraintSystem {
        rcond: 0.0,
    })?;
    let cm = constraint_matrix(q, p);
    let b = coriolis_vector(q, qdot, p);
    Ok(m_inv * (t5 + cm.transpose() * lambda - b))
}

/// One classical RK4 step with the torque held constant, followed by a
/// velocity projection `q̇ ← q̇ − Cᵀ(CCᵀ)⁻¹Cq̇` that arrests constraint
/// drift.
pub fn step_rk4(
    state: &GeneralizedState,
    torques: &WheelTorques,
    dt: f64,
    p: &RobotParams,
) -> Result<GeneralizedState, DynamicsError> {
    debug_assert!(dt > 0.0);
    let deriv = |q: &Vector5<f64>, qdot: &Vector5<f64>| -> Result<(Vector5<f64>, Vector5<f64>), DynamicsError> {
        Ok((*qdot, acceleration(q, qdot, torques, p)?))
    };

    let (k1q, k1v) = deriv(&state.q, &state.qdot)?;
    let h = 0.5 * dt;
    let (k2q, k2v) = deriv(&(state.q + h * k1q), &(state.qdot + h * k1v))?;
    let (k3q, k3v) = deriv(&(state.q + h * k2q), &(state.qdot + h * k2v))?;
    let (k4q, k4v) = deriv(&(state.q + dt * k3q), &(state.qdot + dt * k3v))?;

    let sixth = dt / 6.0;
    let q_new = state.q + sixth * (k1q + 2.0 * k2q + 2.0 * k3q + k4q);
    let mut v_new = state.qdot + sixth * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);

    let cm = constraint_matrix(&q_new, p);
    let gram: Matrix3<f64> = (cm * cm.transpose()).into();
    let residual = cm * v_new;
    v_new -= cm.transpose() * solve_spd3(&gram, &residual.into())?;

    Ok(GeneralizedState::new(q_new, v_new))
}

/// Builds a state whose velocity lies exactly in the constraint null
/// space, from the two wheel coordinate rates.
pub fn state_from_wheel_rates(
    x: f64,
    y: f64,
    heading: f64,
    wheel_rate_1: f64,
    wheel_rate_2: f64,
    p: &RobotParams,
) -> GeneralizedState {
    let (s, c) = heading.sin_cos();
    let v = -0.5 * p.wheel_radius * (wheel_rate_1 - wheel_rate_2);
    let yaw_rate = -p.wheel_radius / (2.0 * p.half_track) * (wheel_rate_1 + wheel_rate_2);
    GeneralizedState::new(
        Vector5::new(x, y, heading, 0.0, 0.0),
        Vector5::new(c * v, s * v, yaw_rate, wheel_rate_1, wheel_rate_2),
    )
}

/// Kinetic energy `½·q̇ᵀM(q)q̇`.
pub fn kinetic_energy(state: &GeneralizedState, p: &RobotParams) -> f64 {
    let m = mass_matrix(&state.q, p);
    0.5 * state.qdot.dot(&(m * state.qdot))
}
