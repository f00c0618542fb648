//! Finite-horizon objective and its box-constrained minimizer.
//!
//! The objective simulates the plant over the horizon and accumulates the
//! stage cost at every propagated state; obstacle positions inside the
//! horizon come from the constant-velocity predictor. Minimization is a
//! quasi-Newton sequential quadratic method: finite-difference gradients,
//! a damped BFGS curvature model, a box-constrained quadratic subproblem
//! solved by iterative clamping, and a backtracking line search. Iterates
//! stay inside the bounds at all times.

use crate::cost::{stage_cost, CostWeights, ObstacleWeights};
use crate::dynamics::{step_rk4, DynamicsError, GeneralizedState, RobotParams, WheelTorques};
use crate::trajectory::{predict_obstacle, ObstacleState, ReferencePoint};
use nalgebra::{DMatrix, DVector, Vector2, Vector5};
use serde::{Deserialize, Serialize};
use std::time::Instant;
use thiserror::Error;

/// Elementwise torque box, N·m.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TorqueBounds {
    pub min: f64,
    pub max: f64,
}

impl TorqueBounds {
    pub fn symmetric(limit: f64) -> Self {
        Self { min: -limit, max: limit }
    }

    pub fn clamp(&self, v: f64) -> f64 {
        v.clamp(self.min, self.max)
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.min && v <= self.max
    }
}

/// A horizon of wheel torques together with its box bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlSequence {
    pub torques: Vec<WheelTorques>,
    pub bounds: TorqueBounds,
}

impl ControlSequence {
    pub fn constant(len: usize, torque: WheelTorques, bounds: TorqueBounds) -> Self {
        let clamped = WheelTorques::new(bounds.clamp(torque.right), bounds.clamp(torque.left));
        Self { torques: vec![clamped; len], bounds }
    }

    pub fn zeros(len: usize, bounds: TorqueBounds) -> Self {
        Self::constant(len, WheelTorques::ZERO, bounds)
    }

    pub fn len(&self) -> usize {
        self.torques.len()
    }

    pub fn is_empty(&self) -> bool {
        self.torques.is_empty()
    }

    pub fn first(&self) -> WheelTorques {
        self.torques[0]
    }

    /// Receding-horizon warm start: drop the applied first entry and
    /// repeat the last one.
    pub fn shifted(&self) -> Self {
        let mut torques = self.torques.clone();
        if torques.len() > 1 {
            torques.rotate_left(1);
            let last = torques.len() - 1;
            torques[last] = torques[last - 1];
        }
        Self { torques, bounds: self.bounds }
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut z = Vec::with_capacity(2 * self.torques.len());
        for t in &self.torques {
            z.push(t.right);
            z.push(t.left);
        }
        z
    }

    pub fn from_flat(z: &[f64], bounds: TorqueBounds) -> Self {
        assert!(z.len() % 2 == 0);
        let torques = z
            .chunks_exact(2)
            .map(|c| WheelTorques::new(bounds.clamp(c[0]), bounds.clamp(c[1])))
            .collect();
        Self { torques, bounds }
    }

    pub fn within_bounds(&self) -> bool {
        self.torques
            .iter()
            .all(|t| self.bounds.contains(t.right) && self.bounds.contains(t.left))
    }
}

/// Termination settings for the minimizer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SolverOptions {
    pub gradient_tol: f64,
    pub step_tol: f64,
    pub max_iterations: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { gradient_tol: 1e-6, step_tol: 1e-9, max_iterations: 100 }
    }
}

/// Outcome summary of one solve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SolveReport {
    pub cost: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Wall time, s.
    pub wall_time: f64,
    /// Projected gradient norm at exit.
    pub gradient_norm: f64,
}

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("solver hit the iteration limit without converging")]
    NotConverged { best: Vec<f64>, report: SolveReport },
    #[error("objective evaluated to a non-finite value")]
    NonFiniteCost,
}

/// One optimal-control instance: initial state, per-step references and
/// predicted obstacle positions, weights, and the prediction model.
pub struct OcpProblem<'a> {
    initial_state: GeneralizedState,
    references: Vec<Vector5<f64>>,
    obstacles_per_step: Vec<Vec<(Vector2<f64>, ObstacleWeights)>>,
    weights: &'a CostWeights,
    params: &'a RobotParams,
}

impl<'a> OcpProblem<'a> {
    /// Builds the instance at wall-clock time `t_now`. `references[k]`
    /// must be the desired state for the k-th propagated state, i.e. at
    /// time `t_now + (k+1)·dt`; obstacles are predicted at those times.
    pub fn new(
        initial_state: GeneralizedState,
        references: &[ReferencePoint],
        obstacles: &[ObstacleState],
        t_now: f64,
        weights: &'a CostWeights,
        params: &'a RobotParams,
    ) -> Self {
        assert_eq!(references.len(), weights.horizon, "window length must equal the horizon");
        let obstacles_per_step = (0..references.len())
            .map(|k| {
                let t_eval = t_now + (k + 1) as f64 * weights.dt;
                obstacles
                    .iter()
                    .zip(weights.obstacles.iter())
                    .map(|(o, w)| (predict_obstacle(o, t_now, t_eval, weights.prediction_delay), *w))
                    .collect()
            })
            .collect();
        Self {
            initial_state,
            references: references.iter().map(|r| r.state_vector()).collect(),
            obstacles_per_step,
            weights,
            params,
        }
    }

    pub fn horizon(&self) -> usize {
        self.references.len()
    }

    /// Total cost of one control sequence over the horizon.
    pub fn rollout_cost(&self, controls: &ControlSequence) -> Result<f64, DynamicsError> {
        assert_eq!(controls.len(), self.horizon());
        let mut state = self.initial_state;
        let mut acc = 0.0;
        for (k, tau) in controls.torques.iter().enumerate() {
            state = step_rk4(&state, tau, self.weights.dt, self.params)?;
            acc += stage_cost(
                &state.q,
                &self.references[k],
                &self.weights.state_weights,
                &self.obstacles_per_step[k],
            );
        }
        Ok(acc)
    }

    /// Flat-vector objective for the minimizer; dynamics failures map to
    /// +∞ so the line search backs away from them.
    fn cost_flat(&self, z: &[f64]) -> f64 {
        let mut state = self.initial_state;
        let mut acc = 0.0;
        for (k, pair) in z.chunks_exact(2).enumerate() {
            let tau = WheelTorques::new(pair[0], pair[1]);
            state = match step_rk4(&state, &tau, self.weights.dt, self.params) {
                Ok(s) => s,
                Err(_) => return f64::INFINITY,
            };
            acc += stage_cost(
                &state.q,
                &self.references[k],
                &self.weights.state_weights,
                &self.obstacles_per_step[k],
            );
        }
        acc
    }
}

/// Minimizes the horizon cost over the torque box starting from
/// `warm_start`. The returned sequence respects the bounds elementwise
/// and its cost never exceeds the warm start's.
pub fn solve_ocp(
    problem: &OcpProblem,
    warm_start: &ControlSequence,
    options: &SolverOptions,
) -> Result<(ControlSequence, SolveReport), SolverError> {
    assert_eq!(warm_start.len(), problem.horizon());
    debug_assert!(warm_start.within_bounds());
    let bounds = warm_start.bounds;
    let n = 2 * warm_start.len();
    let lower = vec![bounds.min; n];
    let upper = vec![bounds.max; n];
    let objective = |z: &[f64]| problem.cost_flat(z);
    match minimize_box(&objective, &warm_start.to_flat(), &lower, &upper, options) {
        Ok((z, report)) => Ok((ControlSequence::from_flat(&z, bounds), report)),
        Err(SolverError::NotConverged { best, report }) => Err(SolverError::NotConverged {
            best,
            report,
        }),
        Err(e) => Err(e),
    }
}

/// Central finite-difference gradient with the step scaled per
/// coordinate: `h_i = 1e-6·(1 + |z_i|)`.
pub fn fd_gradient<F: Fn(&[f64]) -> f64>(f: &F, z: &[f64]) -> DVector<f64> {
    let mut g = DVector::zeros(z.len());
    let mut probe = z.to_vec();
    for i in 0..z.len() {
        let h = 1e-6 * (1.0 + z[i].abs());
        probe[i] = z[i] + h;
        let hi = f(&probe);
        probe[i] = z[i] - h;
        let lo = f(&probe);
        probe[i] = z[i];
        g[i] = (hi - lo) / (2.0 * h);
    }
    g
}

fn projected_gradient(g: &DVector<f64>, z: &[f64], lower: &[f64], upper: &[f64]) -> DVector<f64> {
    let mut pg = g.clone();
    for i in 0..z.len() {
        if z[i] <= lower[i] && g[i] > 0.0 {
            pg[i] = 0.0;
        } else if z[i] >= upper[i] && g[i] < 0.0 {
            pg[i] = 0.0;
        }
    }
    pg
}

/// Box-constrained quadratic subproblem `min ½dᵀBd + gᵀd` with
/// `l ≤ z+d ≤ u`, by Newton steps with iterative clamping of violated
/// coordinates. Returns a feasible step.
fn solve_box_subproblem(
    curvature: &DMatrix<f64>,
    g: &DVector<f64>,
    z: &[f64],
    lower: &[f64],
    upper: &[f64],
) -> DVector<f64> {
    let n = z.len();
    // fixed[i]: Some(target step) for coordinates pinned at a bound
    let mut fixed: Vec<Option<f64>> = vec![None; n];
    for _round in 0..=n {
        let free: Vec<usize> = (0..n).filter(|&i| fixed[i].is_none()).collect();
        if free.is_empty() {
            break;
        }
        // reduced system B_ff d_f = −(g_f + B_fa d_a)
        let mut rhs = DVector::zeros(free.len());
        for (fi, &i) in free.iter().enumerate() {
            let mut v = -g[i];
            for (j, fj) in fixed.iter().enumerate() {
                if let Some(dj) = fj {
                    v -= curvature[(i, j)] * dj;
                }
            }
            rhs[fi] = v;
        }
        let mut reduced = DMatrix::zeros(free.len(), free.len());
        for (fi, &i) in free.iter().enumerate() {
            for (fj, &j) in free.iter().enumerate() {
                reduced[(fi, fj)] = curvature[(i, j)];
            }
        }
        // ridge escalation if the curvature model lost definiteness
        let mut ridge = 0.0;
        let d_free = loop {
            let mut m = reduced.clone();
            if ridge > 0.0 {
                for k in 0..free.len() {
                    m[(k, k)] += ridge;
                }
            }
            if let Some(chol) = m.cholesky() {
                break chol.solve(&rhs);
            }
            ridge = if ridge == 0.0 { 1e-10 } else { ridge * 100.0 };
            if ridge > 1e6 {
                break rhs.clone();
            }
        };

        let mut new_violation = false;
        for (fi, &i) in free.iter().enumerate() {
            let target = z[i] + d_free[fi];
            if target < lower[i] {
                fixed[i] = Some(lower[i] - z[i]);
                new_violation = true;
            } else if target > upper[i] {
                fixed[i] = Some(upper[i] - z[i]);
                new_violation = true;
            }
        }
        if !new_violation {
            let mut d = DVector::zeros(n);
            for (fi, &i) in free.iter().enumerate() {
                d[i] = d_free[fi];
            }
            for (i, fj) in fixed.iter().enumerate() {
                if let Some(dj) = fj {
                    d[i] = *dj;
                }
            }
            return d;
        }
    }
    // everything pinned
    let mut d = DVector::zeros(n);
    for (i, fj) in fixed.iter().enumerate() {
        if let Some(dj) = fj {
            d[i] = *dj;
        }
    }
    d
}

fn clamp_into(z: &mut [f64], lower: &[f64], upper: &[f64]) {
    for i in 0..z.len() {
        z[i] = z[i].clamp(lower[i], upper[i]);
    }
}

/// Quasi-Newton minimization over a box. Returns the best feasible point
/// found; every accepted step decreases the objective.
pub fn minimize_box<F: Fn(&[f64]) -> f64>(
    f: &F,
    x0: &[f64],
    lower: &[f64],
    upper: &[f64],
    options: &SolverOptions,
) -> Result<(Vec<f64>, SolveReport), SolverError> {
    let start = Instant::now();
    let n = x0.len();
    let mut z = x0.to_vec();
    clamp_into(&mut z, lower, upper);
    let mut fz = f(&z);
    if !fz.is_finite() {
        return Err(SolverError::NonFiniteCost);
    }
    let mut g = fd_gradient(f, &z);
    let mut curvature = DMatrix::identity(n, n);
    let mut iterations = 0;
    let mut converged = false;
    let mut grad_norm = projected_gradient(&g, &z, lower, upper).norm();

    const ARMIJO: f64 = 1e-4;

    while iterations < options.max_iterations {
        grad_norm = projected_gradient(&g, &z, lower, upper).norm();
        if grad_norm <= options.gradient_tol {
            converged = true;
            break;
        }
        iterations += 1;

        let mut d = solve_box_subproblem(&curvature, &g, &z, lower, upper);
        let mut descent = g.dot(&d);
        if !(descent < 0.0) {
            // curvature model unusable here: restart it and fall back to a
            // projected steepest-descent step scaled to a fraction of the box
            curvature = DMatrix::identity(n, n);
            let width = upper
                .iter()
                .zip(lower)
                .map(|(u, l)| u - l)
                .fold(f64::INFINITY, f64::min);
            let scale = 0.1 * width / g.amax().max(1e-12);
            let mut trial = z.clone();
            for i in 0..n {
                trial[i] -= scale * g[i];
            }
            clamp_into(&mut trial, lower, upper);
            for i in 0..n {
                d[i] = trial[i] - z[i];
            }
            descent = g.dot(&d);
            if !(descent < 0.0) {
                converged = grad_norm <= options.gradient_tol;
                break;
            }
        }

        // backtracking line search; the segment stays in the box because
        // z and z+d both do
        let mut alpha = 1.0;
        let mut accepted = false;
        let mut z_new = z.clone();
        let mut f_new = fz;
        for _ in 0..30 {
            for i in 0..n {
                z_new[i] = z[i] + alpha * d[i];
            }
            clamp_into(&mut z_new, lower, upper);
            let trial = f(&z_new);
            if trial.is_finite() && trial <= fz + ARMIJO * alpha * descent {
                f_new = trial;
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if !accepted {
            // no decrease along this direction; restart curvature once,
            // otherwise we are at numerical resolution
            if curvature != DMatrix::identity(n, n) {
                curvature = DMatrix::identity(n, n);
                continue;
            }
            break;
        }

        let g_new = fd_gradient(f, &z_new);
        let step: DVector<f64> =
            DVector::from_iterator(n, z_new.iter().zip(&z).map(|(a, b)| a - b));
        let y = &g_new - &g;

        // damped BFGS update keeps the curvature model positive definite
        let sy = step.dot(&y);
        let bs = &curvature * &step;
        let sbs = step.dot(&bs);
        if sbs > 0.0 && step.norm() > 0.0 {
            let (y_eff, sy_eff) = if sy < 0.2 * sbs {
                let theta = 0.8 * sbs / (sbs - sy);
                let y_mixed = theta * &y + (1.0 - theta) * &bs;
                let sy_mixed = step.dot(&y_mixed);
                (y_mixed, sy_mixed)
            } else {
                (y.clone(), sy)
            };
            if sy_eff > 1e-14 {
                curvature = curvature - (&bs * bs.transpose()) / sbs
                    + (&y_eff * y_eff.transpose()) / sy_eff;
            }
        }

        let step_norm = step.norm();
        z = z_new;
        fz = f_new;
        g = g_new;
        if step_norm <= options.step_tol * (1.0 + DVector::from_row_slice(&z).norm()) {
            grad_norm = projected_gradient(&g, &z, lower, upper).norm();
            converged = true;
            break;
        }
    }

    if !converged {
        grad_norm = projected_gradient(&g, &z, lower, upper).norm();
        converged = grad_norm <= options.gradient_tol;
    }

    let report = SolveReport {
        cost: fz,
        iterations,
        converged,
        wall_time: start.elapsed().as_secs_f64(),
        gradient_norm: grad_norm,
    };
    if converged {
        Ok((z, report))
    } else {
        Err(SolverError::NotConverged { best: z, report })
    }
}
