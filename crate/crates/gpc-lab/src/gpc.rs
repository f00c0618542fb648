//! Off-policy Gaussian predictive controller: feature encoding, torque
//! prediction with confidence, the instantaneous running cost and the
//! hand-over criterion against the optimizing controller's cost record.

use crate::cost::{stage_cost, wrap_angle, CostWeights};
use crate::dynamics::{GeneralizedState, WheelTorques};
use crate::gp::GpModel;
use crate::solver::TorqueBounds;
use crate::trajectory::{ObstacleState, ReferenceWindow};
use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

/// Feature vector length: pose error (3), body velocities (3), obstacle
/// relative position and velocity (4), path-curvature proxies (2).
pub const FEATURE_DIM: usize = 12;

fn rotate_into_frame(heading: f64, v: Vector2<f64>) -> Vector2<f64> {
    let (s, c) = heading.sin_cos();
    Vector2::new(c * v.x + s * v.y, -s * v.x + c * v.y)
}

/// Encodes the scene relative to the robot body frame; rigid motions of
/// the whole scene leave the encoding unchanged.
pub fn build_features(
    state: &GeneralizedState,
    obstacle: &ObstacleState,
    window: &ReferenceWindow,
) -> [f64; FEATURE_DIM] {
    assert!(window.len() >= 2, "feature encoding needs at least two reference points");
    let heading = state.heading();
    let position = state.position();
    let head = window.head();

    let pose_err = rotate_into_frame(heading, position - head.position());
    let heading_err = wrap_angle(heading - head.heading);
    let vel_body = rotate_into_frame(heading, state.planar_velocity());
    let obs_rel = rotate_into_frame(heading, obstacle.position - position);
    let obs_vel_rel = rotate_into_frame(heading, obstacle.velocity - state.planar_velocity());

    // lateral offsets of the mid and final window points in the frame of
    // the current reference pose: a proxy for upcoming path curvature
    let mid = &window.points[window.len() / 2];
    let last = &window.points[window.len() - 1];
    let mid_lateral = rotate_into_frame(head.heading, mid.position() - head.position()).y;
    let end_lateral = rotate_into_frame(head.heading, last.position() - head.position()).y;

    [
        pose_err.x,
        pose_err.y,
        heading_err,
        vel_body.x,
        vel_body.y,
        state.qdot[2],
        obs_rel.x,
        obs_rel.y,
        obs_vel_rel.x,
        obs_vel_rel.y,
        mid_lateral,
        end_lateral,
    ]
}

/// The learned controller: a fitted regression model plus the torque box
/// it must respect.
pub struct GpcController {
    pub model: GpModel,
    pub bounds: TorqueBounds,
}

impl GpcController {
    pub fn new(model: GpModel, bounds: TorqueBounds) -> Self {
        assert_eq!(model.feature_dim(), FEATURE_DIM, "model feature width");
        assert_eq!(model.output_dim(), 2, "model must predict two torques");
        Self { model, bounds }
    }

    /// Predicted torques (clamped into the box) and the shared predictive
    /// variance. Far from training data the prediction reverts to the
    /// zero-mean prior — zero torque with variance near one.
    pub fn step(
        &self,
        state: &GeneralizedState,
        obstacle: &ObstacleState,
        window: &ReferenceWindow,
    ) -> (WheelTorques, f64) {
        let features = build_features(state, obstacle, window);
        let (mean, variance) = self.model.predict(&features);
        let torques = WheelTorques::new(self.bounds.clamp(mean[0]), self.bounds.clamp(mean[1]));
        (torques, variance)
    }
}

/// Running-cost statistics of the optimizing controller's training
/// episodes plus the hand-over sensitivity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SwitchStats {
    pub mean_cost: f64,
    pub std_cost: f64,
    pub alpha: f64,
}

/// Strict hand-over criterion: the instantaneous running cost must fall
/// below `μ − α·σ`.
pub fn switch_decision(running_cost: f64, stats: &SwitchStats) -> bool {
    running_cost < stats.mean_cost - stats.alpha * stats.std_cost
}

/// Instantaneous running cost of a state: same code path as the logged
/// per-step stage cost.
pub fn running_cost(
    state: &GeneralizedState,
    window: &ReferenceWindow,
    obstacle: &ObstacleState,
    weights: &CostWeights,
) -> f64 {
    let obstacles: Vec<_> = weights
        .obstacles
        .iter()
        .map(|w| (obstacle.position, *w))
        .collect();
    stage_cost(
        &state.q,
        &window.head().state_vector(),
        &weights.state_weights,
        &obstacles,
    )
}
