//! Tracking and collision cost terms, and the shared per-instant stage
//! cost used by both controllers and the episode logs.

use nalgebra::{Vector2, Vector5};
use serde::{Deserialize, Serialize};

/// Per-obstacle collision penalty parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ObstacleWeights {
    /// Penalty scale Q_c.
    pub cost_scale: f64,
    /// Sigmoid steepness k, 1/m.
    pub steepness: f64,
    /// Threshold distance r_th, m.
    pub threshold_radius: f64,
}

/// Weights and horizon parameters of the discretized objective.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CostWeights {
    /// Diagonal of the 5×5 state weight.
    pub state_weights: [f64; 5],
    pub obstacles: Vec<ObstacleWeights>,
    /// Horizon length N.
    pub horizon: usize,
    /// Horizon step, s (may differ from the simulator step).
    pub dt: f64,
    /// Obstacle prediction delay δ, s.
    pub prediction_delay: f64,
}

impl CostWeights {
    pub fn validate(&self) -> Result<(), String> {
        if self.state_weights.iter().any(|&w| w < 0.0 || !w.is_finite()) {
            return Err("state weights must be non-negative".into());
        }
        for o in &self.obstacles {
            if o.cost_scale < 0.0 {
                return Err("obstacle cost scale must be non-negative".into());
            }
            if !(o.steepness > 0.0) {
                return Err("obstacle sigmoid steepness must be positive".into());
            }
            if !(o.threshold_radius > 0.0) {
                return Err("obstacle threshold radius must be positive".into());
            }
        }
        if self.horizon < 1 {
            return Err("horizon must be at least 1".into());
        }
        if !(self.dt > 0.0) {
            return Err("horizon step must be positive".into());
        }
        Ok(())
    }
}

/// Wraps an angle to (−π, π].
pub fn wrap_angle(a: f64) -> f64 {
    let w = a.rem_euclid(std::f64::consts::TAU);
    if w > std::f64::consts::PI {
        w - std::f64::consts::TAU
    } else {
        w
    }
}

/// Quadratic deviation `(x − x_r)ᵀ Q_x (x − x_r)` with diagonal weight.
pub fn tracking_cost(x: &Vector5<f64>, x_ref: &Vector5<f64>, state_weights: &[f64; 5]) -> f64 {
    let mut acc = 0.0;
    for i in 0..5 {
        let e = x[i] - x_ref[i];
        acc += state_weights[i] * e * e;
    }
    acc
}

/// Sigmoid collision penalty summed over predicted obstacle positions.
pub fn collision_cost(x: &Vector5<f64>, obstacles: &[(Vector2<f64>, ObstacleWeights)]) -> f64 {
    let pos = Vector2::new(x[0], x[1]);
    obstacles
        .iter()
        .map(|(p, w)| {
            let d = (pos - p).norm();
            w.cost_scale / (1.0 + (w.steepness * (d - w.threshold_radius)).exp())
        })
        .sum()
}

/// Stage cost at one instant: tracking plus collision terms, with the
/// heading deviation wrapped to (−π, π] before weighting (the state keeps
/// a winding heading while reference headings live on the circle).
pub fn stage_cost(
    x: &Vector5<f64>,
    x_ref: &Vector5<f64>,
    state_weights: &[f64; 5],
    obstacles: &[(Vector2<f64>, ObstacleWeights)],
) -> f64 {
    let mut aligned = *x_ref;
    aligned[2] = x[2] - wrap_angle(x[2] - x_ref[2]);
    tracking_cost(x, &aligned, state_weights) + collision_cost(x, obstacles)
}
