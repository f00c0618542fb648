//! Environment matrix: ordered pairings of catalogue curves into
//! (robot reference, obstacle path) scenarios.

use crate::config::NamedCurve;
use crate::trajectory::{CurveSpec, ObstacleState};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("catalogue size mismatch: {0}")]
    CatalogueSizeMismatch(String),
}

/// How the obstacle moves: along a catalogue curve, or ballistically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "camelCase")]
pub enum ObstacleSpec {
    Curve { #[serde(flatten)] spec: CurveSpec },
    Linear { position: [f64; 2], velocity: [f64; 2] },
}

impl ObstacleSpec {
    pub fn state_at(&self, t: f64, threshold_radius: f64) -> ObstacleState {
        match self {
            ObstacleSpec::Curve { spec } => ObstacleState::on_curve(spec, t, threshold_radius),
            ObstacleSpec::Linear { position, velocity } => ObstacleState {
                position: nalgebra::Vector2::new(
                    position[0] + velocity[0] * t,
                    position[1] + velocity[1] * t,
                ),
                velocity: nalgebra::Vector2::new(velocity[0], velocity[1]),
                threshold_radius,
            },
        }
    }
}

/// One benchmark scenario: a reference trajectory for the robot and an
/// obstacle path, with the obstacle's threshold radius and a duration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Environment {
    pub id: String,
    pub robot_curve: CurveSpec,
    pub obstacle: ObstacleSpec,
    /// Obstacle threshold radius r_th, m.
    pub obstacle_radius: f64,
    /// Episode duration, s.
    pub duration: f64,
}

impl Environment {
    pub fn obstacle_state_at(&self, t: f64) -> ObstacleState {
        self.obstacle.state_at(t, self.obstacle_radius)
    }
}

/// All ordered pairs of distinct catalogue curves; a 10-curve catalogue
/// yields the full 90-environment matrix.
pub fn generate_environments(
    catalogue: &[NamedCurve],
    obstacle_radius: f64,
    duration: f64,
) -> Result<Vec<Environment>, EnvError> {
    if catalogue.len() < 2 {
        return Err(EnvError::CatalogueSizeMismatch(format!(
            "need at least two catalogue curves, got {}",
            catalogue.len()
        )));
    }
    let mut names: Vec<&str> = catalogue.iter().map(|c| c.name.as_str()).collect();
    names.sort_unstable();
    names.dedup();
    if names.len() != catalogue.len() {
        return Err(EnvError::CatalogueSizeMismatch(
            "catalogue names must be distinct".into(),
        ));
    }
    let mut envs = Vec::with_capacity(catalogue.len() * (catalogue.len() - 1));
    for robot in catalogue {
        for obstacle in catalogue {
            if robot.name == obstacle.name {
                continue;
            }
            envs.push(Environment {
                id: format!("{}__{}", robot.name, obstacle.name),
                robot_curve: robot.spec,
                obstacle: ObstacleSpec::Curve { spec: obstacle.spec },
                obstacle_radius,
                duration,
            });
        }
    }
    Ok(envs)
}
