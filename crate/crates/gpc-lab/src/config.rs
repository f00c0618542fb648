//! Single-file JSON configuration for the whole pipeline.

use crate::cost::CostWeights;
use crate::dynamics::RobotParams;
use crate::solver::{SolverOptions, TorqueBounds};
use crate::trajectory::{CurveShape, CurveSpec};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config file error: {0}")]
    Io(#[from] std::io::Error),
    #[error("config parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// A catalogue entry: a curve with a stable name used in environment ids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct NamedCurve {
    pub name: String,
    #[serde(flatten)]
    pub spec: CurveSpec,
}

/// Simulator and control-loop timing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TimingConfig {
    /// Simulator step, s.
    pub sim_dt: f64,
    /// Control recompute period; also the horizon step of the optimizer.
    /// Must be an integer multiple of `sim_dt`.
    pub control_dt: f64,
    /// Episode length, s.
    pub episode_duration: f64,
}

/// Objective weights shared by every environment; the per-environment
/// obstacle radius completes the collision term.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct WeightsConfig {
    pub state_weights: [f64; 5],
    pub obstacle_cost_scale: f64,
    pub obstacle_steepness: f64,
    pub horizon: usize,
    pub prediction_delay: f64,
}

/// Regression settings for the imitation controller.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct GpConfig {
    /// Noise/jitter σ²ₙ on the Gram diagonal.
    pub noise: f64,
    /// Initial length scale as a multiple of each feature's spread.
    pub length_scale_multiple: f64,
    /// Refine length scales by marginal-likelihood search before the
    /// final fit.
    pub fit_length_scales: bool,
    /// Training-point cap for the length-scale search.
    pub fit_subsample: usize,
    /// Training-set size cap.
    pub max_training_points: usize,
}

/// Controller hand-over rule parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SwitchingConfig {
    /// Sensitivity α in the threshold μ − α·σ.
    pub alpha: f64,
    /// Consecutive control steps the criterion must hold.
    pub consecutive_steps: usize,
    /// Predictive variance above which the supervisor reverts to the
    /// optimizing controller.
    pub ood_variance_threshold: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SplitConfig {
    pub train_count: usize,
    pub test_count: usize,
}

/// Top-level configuration. One seed derives every stochastic choice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RunConfig {
    pub seed: u64,
    pub robot: RobotParams,
    pub timing: TimingConfig,
    pub weights: WeightsConfig,
    pub torque_limit: f64,
    pub solver: SolverOptions,
    pub gp: GpConfig,
    pub switching: SwitchingConfig,
    pub split: SplitConfig,
    /// Obstacle threshold radius r_th for generated environments, m.
    pub obstacle_radius: f64,
    /// Repeated timing measurements per learned-controller step (median
    /// reported) to push below the wall-clock noise floor.
    pub gpc_timing_repeats: usize,
    /// Run data-collection episodes on the thread pool.
    pub parallel_episodes: bool,
    /// Solve-time histogram bucket width, ms.
    pub histogram_bucket_ms: f64,
    pub catalogue: Vec<NamedCurve>,
}

fn default_catalogue() -> Vec<NamedCurve> {
    let entry = |name: &str, shape: CurveShape, speed: f64, phase: f64| NamedCurve {
        name: name.to_string(),
        spec: CurveSpec::new(shape, speed, phase),
    };
    vec![
        entry("lem-a", CurveShape::LemniscateOfGerono { scale: 2.0 }, 0.40, 0.0),
        entry("lem-b", CurveShape::LemniscateOfGerono { scale: 3.0 }, 0.50, 5.0),
        entry("ell-a", CurveShape::Ellipse { a: 4.0, b: 1.0 }, 0.40, 0.0),
        entry("ell-b", CurveShape::Ellipse { a: 1.0, b: 2.25 }, 0.50, 8.0),
        entry("circle", CurveShape::Ellipse { a: 2.25, b: 2.25 }, 0.35, 0.0),
        entry("sin-a", CurveShape::Sine { amplitude: 1.0, frequency: 0.8 }, 0.50, 0.0),
        entry("sin-b", CurveShape::Sine { amplitude: 1.5, frequency: 0.5 }, 0.40, 6.0),
        entry("sin-c", CurveShape::Sine { amplitude: 0.75, frequency: 1.2 }, 0.30, 0.0),
        entry("cyc-a", CurveShape::Cycloid { r: 0.8 }, 0.40, 2.0),
        entry("cyc-b", CurveShape::Cycloid { r: 1.2 }, 0.50, 4.0),
    ]
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 20240715,
            robot: RobotParams::default(),
            timing: TimingConfig { sim_dt: 0.01, control_dt: 0.05, episode_duration: 15.0 },
            weights: WeightsConfig {
                state_weights: [20.0, 20.0, 2.0, 0.0, 0.0],
                obstacle_cost_scale: 30.0,
                obstacle_steepness: 12.0,
                horizon: 15,
                prediction_delay: 0.02,
            },
            torque_limit: 5.0,
            solver: SolverOptions::default(),
            gp: GpConfig {
                noise: 1e-4,
                length_scale_multiple: 1.0,
                fit_length_scales: true,
                fit_subsample: 400,
                max_training_points: 2000,
            },
            switching: SwitchingConfig {
                alpha: 0.5,
                consecutive_steps: 10,
                ood_variance_threshold: 0.5,
            },
            split: SplitConfig { train_count: 6, test_count: 4 },
            obstacle_radius: 0.4,
            gpc_timing_repeats: 5,
            parallel_episodes: true,
            histogram_bucket_ms: 10.0,
            catalogue: default_catalogue(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)?;
        let cfg: RunConfig = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn save(&self, path: &Path) -> Result<(), ConfigError> {
        std::fs::write(path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.robot
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if !(self.timing.sim_dt > 0.0) || !(self.timing.control_dt > 0.0) {
            return Err(ConfigError::Invalid("time steps must be positive".into()));
        }
        let ratio = self.timing.control_dt / self.timing.sim_dt;
        if (ratio - ratio.round()).abs() > 1e-9 || ratio < 1.0 {
            return Err(ConfigError::Invalid(
                "controlDt must be an integer multiple of simDt".into(),
            ));
        }
        if !(self.timing.episode_duration > 0.0) {
            return Err(ConfigError::Invalid("episode duration must be positive".into()));
        }
        if self.weights.horizon < 1 {
            return Err(ConfigError::Invalid("horizon must be at least 1".into()));
        }
        if !(self.torque_limit > 0.0) {
            return Err(ConfigError::Invalid("torque limit must be positive".into()));
        }
        if self.switching.alpha < 0.0 {
            return Err(ConfigError::Invalid("alpha must be non-negative".into()));
        }
        if self.switching.consecutive_steps < 1 {
            return Err(ConfigError::Invalid("switch window must be at least 1".into()));
        }
        for c in &self.catalogue {
            c.spec
                .validate()
                .map_err(ConfigError::Invalid)?;
        }
        let mut names: Vec<&str> = self.catalogue.iter().map(|c| c.name.as_str()).collect();
        names.sort_unstable();
        names.dedup();
        if names.len() != self.catalogue.len() {
            return Err(ConfigError::Invalid("catalogue names must be unique".into()));
        }
        Ok(())
    }

    /// Control recompute interval in simulator steps.
    pub fn control_every(&self) -> usize {
        (self.timing.control_dt / self.timing.sim_dt).round() as usize
    }

    pub fn bounds(&self) -> TorqueBounds {
        TorqueBounds::symmetric(self.torque_limit)
    }

    /// Objective weights for one environment's obstacle radius.
    pub fn weights_for(&self, obstacle_radius: f64) -> CostWeights {
        CostWeights {
            state_weights: self.weights.state_weights,
            obstacles: vec![crate::cost::ObstacleWeights {
                cost_scale: self.weights.obstacle_cost_scale,
                steepness: self.weights.obstacle_steepness,
                threshold_radius: obstacle_radius,
            }],
            horizon: self.weights.horizon,
            dt: self.timing.control_dt,
            prediction_delay: self.weights.prediction_delay,
        }
    }

    /// Hash of the canonical JSON encoding; stamped into episode logs.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(canonical.as_bytes());
        let mut hex = String::with_capacity(16);
        for b in digest.iter().take(8) {
            hex.push_str(&format!("{b:02x}"));
        }
        hex
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_is_valid() {
        let cfg = RunConfig::default();
        assert!(cfg.validate().is_ok());
        assert_eq!(cfg.catalogue.len(), 10);
        assert_eq!(cfg.control_every(), 5);
    }

    #[test]
    fn config_round_trips_through_json() {
        let cfg = RunConfig::default();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("config.json");
        cfg.save(&path).unwrap();
        let loaded = RunConfig::load(&path).unwrap();
        assert_eq!(cfg, loaded);
        assert_eq!(cfg.hash(), loaded.hash());
    }

    #[test]
    fn hash_tracks_content() {
        let a = RunConfig::default();
        let mut b = RunConfig::default();
        b.seed += 1;
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn misaligned_control_rate_rejected() {
        let mut cfg = RunConfig::default();
        cfg.timing.control_dt = 0.013;
        assert!(cfg.validate().is_err());
    }
}
