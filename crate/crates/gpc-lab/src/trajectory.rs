//! Reference curve families, sampled reference windows, and the
//! constant-velocity obstacle predictor.
//!
//! Curves are traversed at a constant parameter rate chosen so the average
//! speed over one parameter period matches the spec'd speed; exact
//! arc-length parameterization is deliberately not used.

use nalgebra::{Vector2, Vector5};
use serde::{Deserialize, Serialize};

/// Number of panels in the composite-Simpson arc-length quadrature.
const ARC_LENGTH_PANELS: usize = 4096;

/// Shape of a reference curve. The ellipse denominators are the squared
/// semi-axes (`x²/a + y²/b = 1` taken verbatim).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "camelCase")]
pub enum CurveShape {
    LemniscateOfGerono { scale: f64 },
    Ellipse { a: f64, b: f64 },
    Sine { amplitude: f64, frequency: f64 },
    Cycloid { r: f64 },
}

impl CurveShape {
    /// Curve point at parameter value `s`.
    pub fn point(&self, s: f64) -> Vector2<f64> {
        match *self {
            CurveShape::LemniscateOfGerono { scale } => {
                let (sin, cos) = s.sin_cos();
                Vector2::new(scale * cos, scale * sin * cos)
            }
            CurveShape::Ellipse { a, b } => {
                let (sin, cos) = s.sin_cos();
                Vector2::new(a.sqrt() * cos, b.sqrt() * sin)
            }
            CurveShape::Sine { amplitude, frequency } => {
                Vector2::new(s, amplitude * (frequency * s).sin())
            }
            CurveShape::Cycloid { r } => Vector2::new(r * (s - s.sin()), r * (1.0 - s.cos())),
        }
    }

    /// Derivative of [`CurveShape::point`] with respect to the parameter.
    pub fn derivative(&self, s: f64) -> Vector2<f64> {
        match *self {
            CurveShape::LemniscateOfGerono { scale } => {
                Vector2::new(-scale * s.sin(), scale * (2.0 * s).cos())
            }
            CurveShape::Ellipse { a, b } => {
                let (sin, cos) = s.sin_cos();
                Vector2::new(-a.sqrt() * sin, b.sqrt() * cos)
            }
            CurveShape::Sine { amplitude, frequency } => {
                Vector2::new(1.0, amplitude * frequency * (frequency * s).cos())
            }
            CurveShape::Cycloid { r } => Vector2::new(r * (1.0 - s.cos()), r * s.sin()),
        }
    }

    /// Parameter period after which the shape repeats (the sine repeats
    /// with a translation).
    pub fn parameter_period(&self) -> f64 {
        match *self {
            CurveShape::Sine { frequency, .. } => std::f64::consts::TAU / frequency,
            _ => std::f64::consts::TAU,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        let ok = match *self {
            CurveShape::LemniscateOfGerono { scale } => scale > 0.0,
            CurveShape::Ellipse { a, b } => a > 0.0 && b > 0.0,
            CurveShape::Sine { amplitude, frequency } => amplitude > 0.0 && frequency > 0.0,
            CurveShape::Cycloid { r } => r > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(format!("curve shape parameters must be strictly positive: {self:?}"))
        }
    }
}

/// A reference curve: shape, target average speed and a phase offset in
/// seconds along the traversal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CurveSpec {
    #[serde(flatten)]
    pub shape: CurveShape,
    /// Average speed along the curve, m/s.
    pub speed: f64,
    /// Phase offset, seconds.
    #[serde(default)]
    pub phase: f64,
}

impl CurveSpec {
    pub fn new(shape: CurveShape, speed: f64, phase: f64) -> Self {
        Self { shape, speed, phase }
    }

    pub fn validate(&self) -> Result<(), String> {
        self.shape.validate()?;
        if !(self.speed > 0.0) {
            return Err(format!("curve speed must be positive, got {}", self.speed));
        }
        Ok(())
    }

    /// Arc length over one parameter period, by composite Simpson.
    pub fn period_arc_length(&self) -> f64 {
        let period = self.shape.parameter_period();
        let n = ARC_LENGTH_PANELS;
        let h = period / n as f64;
        let speed_at = |s: f64| self.shape.derivative(s).norm();
        let mut acc = speed_at(0.0) + speed_at(period);
        for k in 1..n {
            let w = if k % 2 == 1 { 4.0 } else { 2.0 };
            acc += w * speed_at(k as f64 * h);
        }
        acc * h / 3.0
    }

    /// Parameter rate ds/dt that realizes the requested average speed.
    pub fn parameter_rate(&self) -> f64 {
        let period = self.shape.parameter_period();
        self.speed * period / self.period_arc_length()
    }

    /// Time after which the traversal repeats its shape.
    pub fn time_period(&self) -> f64 {
        self.shape.parameter_period() / self.parameter_rate()
    }

    /// Curve point and tangent heading at time `t`.
    pub fn sample(&self, t: f64) -> ReferencePoint {
        let s = self.parameter_rate() * (t + self.phase);
        let p = self.shape.point(s);
        let d = self.shape.derivative(s);
        ReferencePoint { x: p.x, y: p.y, heading: d.y.atan2(d.x) }
    }

    /// Planar velocity of a point traversing the curve at time `t`.
    pub fn velocity(&self, t: f64) -> Vector2<f64> {
        let rate = self.parameter_rate();
        let s = rate * (t + self.phase);
        rate * self.shape.derivative(s)
    }
}

/// A single reference sample: planar position plus tangent heading.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReferencePoint {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
}

impl ReferencePoint {
    /// Embedding into the 5-dimensional state with zero-velocity padding
    /// for the unpenalized wheel coordinates.
    pub fn state_vector(&self) -> Vector5<f64> {
        Vector5::new(self.x, self.y, self.heading, 0.0, 0.0)
    }

    pub fn position(&self) -> Vector2<f64> {
        Vector2::new(self.x, self.y)
    }
}

/// Reference samples at `t0, t0+dt, …`, one per horizon slot.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceWindow {
    pub t0: f64,
    pub dt: f64,
    pub points: Vec<ReferencePoint>,
}

impl ReferenceWindow {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn time_at(&self, index: usize) -> f64 {
        self.t0 + index as f64 * self.dt
    }

    pub fn head(&self) -> &ReferencePoint {
        &self.points[0]
    }
}

/// Samples `count` consecutive reference points starting at `t0`.
pub fn reference_window(spec: &CurveSpec, t0: f64, count: usize, dt: f64) -> ReferenceWindow {
    assert!(count >= 1, "window needs at least one sample");
    assert!(dt > 0.0, "window step must be positive");
    let points = (0..count)
        .map(|k| spec.sample(t0 + k as f64 * dt))
        .collect();
    ReferenceWindow { t0, dt, points }
}

/// Snapshot of a moving obstacle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObstacleState {
    pub position: Vector2<f64>,
    pub velocity: Vector2<f64>,
    /// Collision threshold radius, m.
    pub threshold_radius: f64,
}

impl ObstacleState {
    /// Obstacle following a curve, observed at time `t`.
    pub fn on_curve(spec: &CurveSpec, t: f64, threshold_radius: f64) -> Self {
        let p = spec.sample(t);
        Self {
            position: p.position(),
            velocity: spec.velocity(t),
            threshold_radius,
        }
    }
}

/// Constant-velocity prediction `p(t₀) + v(t₀)·(t − t₀ + δ)`, where `δ`
/// absorbs computation and communication delay.
pub fn predict_obstacle(o: &ObstacleState, t0: f64, t: f64, delay: f64) -> Vector2<f64> {
    o.position + o.velocity * (t - t0 + delay)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI, TAU};

    fn unit_circle() -> CurveSpec {
        CurveSpec::new(CurveShape::Ellipse { a: 1.0, b: 1.0 }, 1.0, 0.0)
    }

    #[test]
    fn unit_circle_start_heads_up() {
        let p = unit_circle().sample(0.0);
        assert_abs_diff_eq!(p.x, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(p.y, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(p.heading, FRAC_PI_2, epsilon = 1e-12);
    }

    #[test]
    fn unit_circle_rate_matches_circumference() {
        // circumference 2π at speed 1 → parameter rate 1, period 2π
        let c = unit_circle();
        assert_abs_diff_eq!(c.period_arc_length(), TAU, epsilon = 1e-9);
        assert_abs_diff_eq!(c.parameter_rate(), 1.0, epsilon = 1e-10);
        assert_abs_diff_eq!(c.time_period(), TAU, epsilon = 1e-9);
    }

    #[test]
    fn sine_slope_one_at_origin() {
        let spec = CurveSpec::new(
            CurveShape::Sine { amplitude: 1.0, frequency: 1.0 },
            1.0,
            0.0,
        );
        let p = spec.sample(0.0);
        assert_abs_diff_eq!(p.x, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(p.y, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(p.heading, FRAC_PI_4, epsilon = 1e-12);
    }

    #[test]
    fn lemniscate_satisfies_implicit_equation() {
        // x⁴ − x² + y² = 0 for the unit-scale curve
        let spec = CurveSpec::new(CurveShape::LemniscateOfGerono { scale: 1.0 }, 0.7, 0.0);
        for k in 0..200 {
            let t = k as f64 * 0.11;
            let p = spec.sample(t);
            let residual = p.x.powi(4) - p.x.powi(2) + p.y.powi(2);
            assert!(residual.abs() <= 1e-9, "residual {residual} at t={t}");
        }
    }

    #[test]
    fn ellipse_satisfies_implicit_equation() {
        let spec = CurveSpec::new(CurveShape::Ellipse { a: 4.0, b: 2.25 }, 0.5, 0.3);
        for k in 0..200 {
            let t = k as f64 * 0.17;
            let p = spec.sample(t);
            let residual = p.x * p.x / 4.0 + p.y * p.y / 2.25 - 1.0;
            assert!(residual.abs() <= 1e-9, "residual {residual} at t={t}");
        }
    }

    #[test]
    fn cycloid_satisfies_implicit_equation() {
        // x = r·acos(1 − y/r) − √(y(2r−y)) on the rising branch
        let r = 0.8;
        let spec = CurveSpec::new(CurveShape::Cycloid { r }, 0.5, 0.0);
        let rate = spec.parameter_rate();
        // restrict to parameter in (0, π): acos inverts cos there
        let t_max = PI / rate;
        for k in 1..100 {
            let t = t_max * k as f64 / 100.0;
            let p = spec.sample(t);
            let x_implicit = r * (1.0 - p.y / r).acos() - (p.y * (2.0 * r - p.y)).sqrt();
            assert!(
                (p.x - x_implicit).abs() <= 1e-9,
                "residual {} at t={t}",
                p.x - x_implicit
            );
        }
    }

    #[test]
    fn single_sample_window_is_degenerate() {
        let spec = unit_circle();
        let w = reference_window(&spec, 1.7, 1, 0.05);
        assert_eq!(w.len(), 1);
        assert_eq!(w.points[0], spec.sample(1.7));
    }

    #[test]
    fn window_times_are_uniform() {
        let w = reference_window(&unit_circle(), 2.0, 5, 0.25);
        for k in 0..5 {
            assert_abs_diff_eq!(w.time_at(k), 2.0 + 0.25 * k as f64, epsilon = 1e-15);
        }
    }

    #[test]
    fn adjacent_windows_overlap() {
        let spec = CurveSpec::new(CurveShape::Cycloid { r: 1.2 }, 0.4, 0.6);
        let n = 8;
        let dt = 0.05;
        let a = reference_window(&spec, 3.0, n, dt);
        let b = reference_window(&spec, 3.0 + dt, n, dt);
        for k in 0..n - 1 {
            let p = a.points[k + 1];
            let q = b.points[k];
            assert_abs_diff_eq!(p.x, q.x, epsilon = 1e-12);
            assert_abs_diff_eq!(p.y, q.y, epsilon = 1e-12);
            assert_abs_diff_eq!(p.heading, q.heading, epsilon = 1e-12);
        }
    }

    #[test]
    fn stationary_obstacle_prediction_is_identity() {
        let o = ObstacleState {
            position: Vector2::new(1.0, -2.0),
            velocity: Vector2::zeros(),
            threshold_radius: 0.5,
        };
        for t in [0.0, 0.5, 3.0] {
            assert_eq!(predict_obstacle(&o, 0.0, t, 0.25), o.position);
        }
        assert_eq!(predict_obstacle(&o, 1.0, 1.0, 0.0), o.position);
    }

    #[test]
    fn obstacle_prediction_direct_substitution() {
        let o = ObstacleState {
            position: Vector2::new(0.0, 0.0),
            velocity: Vector2::new(1.0, 0.5),
            threshold_radius: 0.5,
        };
        let p = predict_obstacle(&o, 0.0, 1.0, 0.2);
        assert_abs_diff_eq!(p.x, 1.2, epsilon = 1e-15);
        assert_abs_diff_eq!(p.y, 0.6, epsilon = 1e-15);
    }

    #[test]
    fn curve_velocity_matches_finite_difference() {
        let spec = CurveSpec::new(CurveShape::LemniscateOfGerono { scale: 2.0 }, 0.45, 0.2);
        let h = 1e-6;
        for k in 0..20 {
            let t = 0.3 * k as f64;
            let v = spec.velocity(t);
            let a = spec.sample(t - h);
            let b = spec.sample(t + h);
            assert_abs_diff_eq!(v.x, (b.x - a.x) / (2.0 * h), epsilon = 1e-6);
            assert_abs_diff_eq!(v.y, (b.y - a.y) / (2.0 * h), epsilon = 1e-6);
        }
    }

    proptest! {
        #[test]
        fn prediction_is_affine_in_time(
            px in -5.0..5.0f64, py in -5.0..5.0f64,
            vx in -2.0..2.0f64, vy in -2.0..2.0f64,
            t0 in 0.0..10.0f64, span in 0.01..5.0f64, delay in 0.0..0.2f64,
        ) {
            let o = ObstacleState {
                position: Vector2::new(px, py),
                velocity: Vector2::new(vx, vy),
                threshold_radius: 0.5,
            };
            let mid = predict_obstacle(&o, t0, t0 + 0.5 * span, delay);
            let lo = predict_obstacle(&o, t0, t0, delay);
            let hi = predict_obstacle(&o, t0, t0 + span, delay);
            let avg = 0.5 * (lo + hi);
            prop_assert!((mid - avg).norm() <= 1e-12);
        }

        #[test]
        fn sampling_is_time_shift_equivariant(
            phase in -10.0..10.0f64,
            t in -10.0..10.0f64,
            scale in 0.5..3.0f64,
            speed in 0.1..2.0f64,
        ) {
            let shifted = CurveSpec::new(CurveShape::LemniscateOfGerono { scale }, speed, phase);
            let base = CurveSpec::new(CurveShape::LemniscateOfGerono { scale }, speed, 0.0);
            let a = shifted.sample(t);
            let b = base.sample(t + phase);
            prop_assert_eq!(a, b);
        }
    }
}
