//! Control-learning laboratory for a differential-drive mobile robot.
//!
//! The crate couples a nonlinear receding-horizon controller (tracking +
//! moving-obstacle avoidance) with an imitation-learned Gaussian-process
//! controller, and benchmarks both over a generated environment matrix:
//!
//! - [`dynamics`] — robot plant in manipulator form with nonholonomic
//!   constraints and an RK4 integrator,
//! - [`trajectory`] — reference curve families, windows, obstacle prediction,
//! - [`cost`] / [`solver`] — discretized finite-horizon objective and a
//!   box-constrained quasi-Newton minimizer,
//! - [`mpc`] — the on-policy receding-horizon controller,
//! - [`gp`] / [`gpc`] — exact GP regression and the off-policy controller
//!   learned from logged rollouts,
//! - [`store`] — episode logs, training-set construction, model files,
//! - [`env`] / [`harness`] — environment matrix generation and the
//!   collect / train / evaluate / compare / export pipeline.
//!
//! Batch work (episode sweeps, Gram assembly) runs on rayon when the
//! default `parallel` feature is enabled and falls back to sequential
//! equivalents otherwise; see [`exec`].

pub mod config;
pub mod cost;
pub mod dynamics;
pub mod env;
pub mod exec;
pub mod gp;
pub mod gpc;
pub mod harness;
pub mod mpc;
pub mod sim;
pub mod solver;
pub mod store;
pub mod trajectory;
