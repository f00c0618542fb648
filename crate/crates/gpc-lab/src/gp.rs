//! Exact zero-mean Gaussian-process regression with an RBF kernel.
//!
//! One shared kernel and Gram factorization serve all output columns
//! (equivalently, independent GPs with tied hyperparameters), so a query
//! returns a mean per output and a single shared variance. Features are
//! standardized per dimension inside the model; length scales are always
//! expressed in original feature units.

use crate::exec;
use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;
use thiserror::Error;

/// Jitter escalation stops once the working jitter exceeds this cap.
pub const MAX_JITTER: f64 = 1e-2;

#[derive(Debug, Error)]
pub enum GpError {
    #[error("Gram matrix not positive definite (jitter escalation exhausted at {jitter:.3e})")]
    NotPositiveDefinite { jitter: f64 },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("model file error: {0}")]
    Io(#[from] std::io::Error),
    #[error("model file parse error: {0}")]
    Parse(#[from] serde_json::Error),
}

/// RBF kernel hyperparameters: one length scale per feature dimension
/// plus a noise/jitter term added to the Gram diagonal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RbfHyperparams {
    pub length_scales: Vec<f64>,
    /// Noise variance σ²ₙ ≥ 0; also the starting jitter.
    pub noise: f64,
}

impl RbfHyperparams {
    pub fn isotropic(dim: usize, length_scale: f64, noise: f64) -> Self {
        Self { length_scales: vec![length_scale; dim], noise }
    }

    pub fn validate(&self) -> Result<(), GpError> {
        if self.length_scales.iter().any(|&l| !(l > 0.0)) {
            return Err(GpError::InvalidInput("length scales must be positive".into()));
        }
        if self.noise < 0.0 || !self.noise.is_finite() {
            return Err(GpError::InvalidInput("noise must be non-negative".into()));
        }
        Ok(())
    }
}

/// `exp(−½ (x−x')ᵀ Φ⁻² (x−x'))` with diagonal length scales Φ.
pub fn rbf_kernel(x: &[f64], x_other: &[f64], h: &RbfHyperparams) -> f64 {
    assert_eq!(x.len(), x_other.len());
    assert_eq!(x.len(), h.length_scales.len());
    let mut acc = 0.0;
    for i in 0..x.len() {
        let d = (x[i] - x_other[i]) / h.length_scales[i];
        acc += d * d;
    }
    (-0.5 * acc).exp()
}

/// Per-dimension standardization stats stored with the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Normalization {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Normalization {
    /// Population mean and standard deviation per column; near-constant
    /// columns get unit scale.
    pub fn from_features(x: &DMatrix<f64>) -> Self {
        let n = x.nrows() as f64;
        let d = x.ncols();
        let mut mean = vec![0.0; d];
        let mut scale = vec![0.0; d];
        for j in 0..d {
            let col = x.column(j);
            let m = col.sum() / n;
            let var = col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n;
            mean[j] = m;
            let s = var.sqrt();
            scale[j] = if s < 1e-12 { 1.0 } else { s };
        }
        Self { mean, scale }
    }

    pub fn apply_row(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .enumerate()
            .map(|(j, v)| (v - self.mean[j]) / self.scale[j])
            .collect()
    }

    fn apply_matrix(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = x.clone();
        for j in 0..x.ncols() {
            let (m, s) = (self.mean[j], self.scale[j]);
            for i in 0..x.nrows() {
                out[(i, j)] = (out[(i, j)] - m) / s;
            }
        }
        out
    }
}

/// A fitted regression model. Immutable after construction; safe to share
/// across threads for concurrent prediction.
#[derive(Debug, Clone)]
pub struct GpModel {
    /// Raw training features, n×d.
    pub features: DMatrix<f64>,
    /// Training targets, n×m.
    pub targets: DMatrix<f64>,
    pub hyperparams: RbfHyperparams,
    pub normalization: Normalization,
    /// Jitter actually used on the Gram diagonal (≥ noise after escalation).
    pub effective_jitter: f64,
    features_norm: DMatrix<f64>,
    /// Squared inverse length scales in normalized feature space.
    inv_sq_scales: Vec<f64>,
    cholesky: Cholesky<f64, Dyn>,
    /// Solved coefficients (K + jitter·I)⁻¹ Y, n×m.
    coefficients: DMatrix<f64>,
}

fn kernel_normalized(a: &[f64], b: &[f64], inv_sq: &[f64]) -> f64 {
    let mut acc = 0.0;
    for i in 0..a.len() {
        let d = a[i] - b[i];
        acc += inv_sq[i] * d * d;
    }
    (-0.5 * acc).exp()
}

/// Gram matrix of the normalized features (no diagonal jitter).
fn gram_matrix(x_norm: &DMatrix<f64>, inv_sq: &[f64]) -> DMatrix<f64> {
    let n = x_norm.nrows();
    let rows: Vec<Vec<f64>> = exec::map_range(n, |i| {
        let xi: Vec<f64> = x_norm.row(i).iter().cloned().collect();
        (0..=i)
            .map(|j| {
                let xj: Vec<f64> = x_norm.row(j).iter().cloned().collect();
                kernel_normalized(&xi, &xj, inv_sq)
            })
            .collect()
    });
    let mut k = DMatrix::zeros(n, n);
    for (i, row) in rows.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            k[(i, j)] = *v;
            k[(j, i)] = *v;
        }
    }
    k
}

/// Sequential Gram assembly; exists so benchmarks can compare the
/// parallel path against it.
pub fn gram_matrix_seq(x_norm: &DMatrix<f64>, length_scales_norm: &[f64]) -> DMatrix<f64> {
    let inv_sq: Vec<f64> = length_scales_norm.iter().map(|l| 1.0 / (l * l)).collect();
    let n = x_norm.nrows();
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        let xi: Vec<f64> = x_norm.row(i).iter().cloned().collect();
        for j in 0..=i {
            let xj: Vec<f64> = x_norm.row(j).iter().cloned().collect();
            let v = kernel_normalized(&xi, &xj, &inv_sq);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    k
}

/// Parallel Gram assembly on normalized features (public for benches).
pub fn gram_matrix_par(x_norm: &DMatrix<f64>, length_scales_norm: &[f64]) -> DMatrix<f64> {
    let inv_sq: Vec<f64> = length_scales_norm.iter().map(|l| 1.0 / (l * l)).collect();
    gram_matrix(x_norm, &inv_sq)
}

/// Fits the model: standardizes features, assembles the Gram matrix,
/// factorizes `K + σ²ₙI` (escalating the jitter tenfold on failure, up to
/// [`MAX_JITTER`]) and solves for the output coefficients.
pub fn fit(x: DMatrix<f64>, y: DMatrix<f64>, h: &RbfHyperparams) -> Result<GpModel, GpError> {
    let normalization = Normalization::from_features(&x);
    fit_with_normalization(x, y, h, normalization)
}

/// Same as [`fit`] but with externally supplied normalization stats
/// (used when reloading a persisted model).
pub fn fit_with_normalization(
    x: DMatrix<f64>,
    y: DMatrix<f64>,
    h: &RbfHyperparams,
    normalization: Normalization,
) -> Result<GpModel, GpError> {
    h.validate()?;
    let (n, d) = x.shape();
    if n < 1 {
        return Err(GpError::InvalidInput("need at least one training point".into()));
    }
    if y.nrows() != n {
        return Err(GpError::DimensionMismatch(format!(
            "feature rows {n} vs target rows {}",
            y.nrows()
        )));
    }
    if h.length_scales.len() != d {
        return Err(GpError::DimensionMismatch(format!(
            "{} length scales for {d} feature dimensions",
            h.length_scales.len()
        )));
    }
    if normalization.mean.len() != d || normalization.scale.len() != d {
        return Err(GpError::DimensionMismatch("normalization stats".into()));
    }
    if x.iter().any(|v| !v.is_finite()) || y.iter().any(|v| !v.is_finite()) {
        return Err(GpError::InvalidInput("non-finite training data".into()));
    }

    let features_norm = normalization.apply_matrix(&x);
    let inv_sq: Vec<f64> = h
        .length_scales
        .iter()
        .zip(&normalization.scale)
        .map(|(l, s)| {
            let ln = l / s;
            1.0 / (ln * ln)
        })
        .collect();
    let gram = gram_matrix(&features_norm, &inv_sq);

    let mut jitter = h.noise;
    let cholesky = loop {
        let mut k = gram.clone();
        for i in 0..n {
            k[(i, i)] += jitter;
        }
        match Cholesky::new(k) {
            Some(c) => break c,
            None => {
                if jitter == 0.0 || jitter * 10.0 > MAX_JITTER {
                    return Err(GpError::NotPositiveDefinite { jitter });
                }
                jitter *= 10.0;
            }
        }
    };
    let coefficients = cholesky.solve(&y);

    Ok(GpModel {
        features: x,
        targets: y,
        hyperparams: h.clone(),
        normalization,
        effective_jitter: jitter,
        features_norm,
        inv_sq_scales: inv_sq,
        cholesky,
        coefficients,
    })
}

impl GpModel {
    pub fn train_count(&self) -> usize {
        self.features.nrows()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.targets.ncols()
    }

    /// Lower Cholesky factor of `K + jitter·I`.
    pub fn cholesky_factor(&self) -> &DMatrix<f64> {
        self.cholesky.l_dirty()
    }

    fn cross_kernel(&self, x_star: &[f64]) -> DVector<f64> {
        let q = self.normalization.apply_row(x_star);
        DVector::from_fn(self.train_count(), |i, _| {
            let xi: Vec<f64> = self.features_norm.row(i).iter().cloned().collect();
            kernel_normalized(&q, &xi, &self.inv_sq_scales)
        })
    }

    /// Predictive mean per output and the shared predictive variance.
    pub fn predict(&self, x_star: &[f64]) -> (DVector<f64>, f64) {
        assert_eq!(
            x_star.len(),
            self.feature_dim(),
            "query dimension must match the model"
        );
        let k_star = self.cross_kernel(x_star);
        let mean = self.coefficients.transpose() * &k_star;
        let w = self.cholesky.solve(&k_star);
        let variance = (1.0 - k_star.dot(&w)).max(0.0);
        (mean, variance)
    }
}

/// Log marginal likelihood of the training targets under the model,
/// summed over output columns.
pub fn log_marginal_likelihood(model: &GpModel) -> f64 {
    let n = model.train_count() as f64;
    let m = model.output_dim() as f64;
    let data_fit: f64 = (0..model.output_dim())
        .map(|j| {
            let y = model.targets.column(j);
            let a = model.coefficients.column(j);
            y.dot(&a)
        })
        .sum();
    let log_det_half: f64 = (0..model.train_count())
        .map(|i| model.cholesky_factor()[(i, i)].ln())
        .sum();
    -0.5 * data_fit - m * log_det_half - 0.5 * n * m * (std::f64::consts::TAU).ln()
}

/// Maximizes the log marginal likelihood over log length scales with a
/// deterministic multi-start coordinate search; the noise term is left
/// untouched. Returned scales are never worse than `h0`.
pub fn fit_length_scales(
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    h0: &RbfHyperparams,
) -> Result<RbfHyperparams, GpError> {
    let normalization = Normalization::from_features(x);
    let score = |scales: &[f64]| -> Result<f64, GpError> {
        let h = RbfHyperparams { length_scales: scales.to_vec(), noise: h0.noise };
        let model = fit_with_normalization(x.clone(), y.clone(), &h, normalization.clone())?;
        Ok(log_marginal_likelihood(&model))
    };

    // bounds in normalized space keep the search away from degenerate fits
    let clamp_scale = |l: f64, dim: usize| -> f64 {
        let s = normalization.scale[dim];
        l.clamp(0.05 * s, 100.0 * s)
    };

    let mut best_scales = h0.length_scales.clone();
    let mut best_score = score(&best_scales)?;

    const STARTS: [f64; 3] = [1.0, 0.3, 3.0];
    const FACTORS: [f64; 5] = [0.4, 0.625, 1.0, 1.6, 2.5];
    for start in STARTS {
        let mut scales: Vec<f64> = h0
            .length_scales
            .iter()
            .enumerate()
            .map(|(j, l)| clamp_scale(l * start, j))
            .collect();
        let mut current = match score(&scales) {
            Ok(v) => v,
            Err(GpError::NotPositiveDefinite { .. }) => f64::NEG_INFINITY,
            Err(e) => return Err(e),
        };
        for _sweep in 0..2 {
            for j in 0..scales.len() {
                let base = scales[j];
                for f in FACTORS {
                    if f == 1.0 {
                        continue;
                    }
                    let candidate = clamp_scale(base * f, j);
                    if candidate == scales[j] {
                        continue;
                    }
                    let old = scales[j];
                    scales[j] = candidate;
                    match score(&scales) {
                        Ok(v) if v > current => current = v,
                        Ok(_) => scales[j] = old,
                        Err(GpError::NotPositiveDefinite { .. }) => scales[j] = old,
                        Err(e) => return Err(e),
                    }
                }
            }
        }
        if current > best_score {
            best_score = current;
            best_scales = scales;
        }
    }

    Ok(RbfHyperparams { length_scales: best_scales, noise: h0.noise })
}

/// On-disk model representation: raw data plus hyperparameters and
/// normalization stats; the factorization is recomputed on load.
#[derive(Debug, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
struct PersistedModel {
    rows: usize,
    cols: usize,
    outputs: usize,
    features: Vec<f64>,
    targets: Vec<f64>,
    hyperparams: RbfHyperparams,
    normalization: Normalization,
}

/// Writes the model as JSON. Exact decimal round-tripping keeps reloaded
/// predictions bit-comparable.
pub fn save_model(model: &GpModel, path: &Path) -> Result<(), GpError> {
    let persisted = PersistedModel {
        rows: model.features.nrows(),
        cols: model.features.ncols(),
        outputs: model.targets.ncols(),
        features: model.features.transpose().as_slice().to_vec(),
        targets: model.targets.transpose().as_slice().to_vec(),
        hyperparams: model.hyperparams.clone(),
        normalization: model.normalization.clone(),
    };
    let mut file = std::fs::File::create(path)?;
    serde_json::to_writer(&mut file, &persisted)?;
    file.flush()?;
    Ok(())
}

/// Reads a model written by [`save_model`] and refits the factorization.
pub fn load_model(path: &Path) -> Result<GpModel, GpError> {
    let file = std::fs::File::open(path)?;
    let p: PersistedModel = serde_json::from_reader(std::io::BufReader::new(file))?;
    if p.features.len() != p.rows * p.cols || p.targets.len() != p.rows * p.outputs {
        return Err(GpError::DimensionMismatch("persisted model shape".into()));
    }
    // row-major on disk
    let x = DMatrix::from_row_slice(p.rows, p.cols, &p.features);
    let y = DMatrix::from_row_slice(p.rows, p.outputs, &p.targets);
    fit_with_normalization(x, y, &p.hyperparams, p.normalization)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_dataset(
        rng: &mut ChaCha8Rng,
        n: usize,
        d: usize,
        m: usize,
    ) -> (DMatrix<f64>, DMatrix<f64>) {
        let x = DMatrix::from_fn(n, d, |_, _| rng.random_range(-2.0..2.0));
        let y = DMatrix::from_fn(n, m, |i, j| {
            (x[(i, 0)] * (1.0 + j as f64)).sin() + 0.1 * rng.random_range(-1.0..1.0)
        });
        (x, y)
    }

    #[test]
    fn kernel_is_one_at_zero_distance() {
        let h = RbfHyperparams::isotropic(3, 0.7, 0.0);
        let x = [0.3, -1.2, 4.0];
        assert_eq!(rbf_kernel(&x, &x, &h), 1.0);
    }

    #[test]
    fn kernel_direct_value() {
        // d=1, Φ=1, x=0, x'=2 → exp(−2)
        let h = RbfHyperparams::isotropic(1, 1.0, 0.0);
        assert_abs_diff_eq!(rbf_kernel(&[0.0], &[2.0], &h), (-2.0f64).exp(), epsilon = 1e-15);
    }

    #[test]
    fn single_point_model() {
        let h = RbfHyperparams::isotropic(1, 1.0, 0.5);
        let model = fit(
            DMatrix::from_row_slice(1, 1, &[0.3]),
            DMatrix::from_row_slice(1, 1, &[2.0]),
            &h,
        )
        .unwrap();
        assert_abs_diff_eq!(model.cholesky_factor()[(0, 0)], 1.5f64.sqrt(), epsilon = 1e-14);
    }

    #[test]
    fn duplicate_rows_without_noise_fail() {
        let x = DMatrix::from_row_slice(2, 1, &[1.0, 1.0]);
        let y = DMatrix::from_row_slice(2, 1, &[0.5, 0.5]);
        let h = RbfHyperparams::isotropic(1, 1.0, 0.0);
        assert!(matches!(
            fit(x, y, &h),
            Err(GpError::NotPositiveDefinite { .. })
        ));
    }

    #[test]
    fn cholesky_reconstructs_gram() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let (x, y) = random_dataset(&mut rng, 50, 3, 2);
        let h = RbfHyperparams::isotropic(3, 1.0, 1e-6);
        let model = fit(x.clone(), y, &h).unwrap();
        let l = model.cholesky_factor();
        let mut reconstructed = DMatrix::zeros(50, 50);
        for i in 0..50 {
            for j in 0..=i {
                let mut acc = 0.0;
                for k in 0..=j {
                    acc += l[(i, k)] * l[(j, k)];
                }
                reconstructed[(i, j)] = acc;
                reconstructed[(j, i)] = acc;
            }
        }
        let mut expected = gram_matrix_seq(
            &model.normalization.apply_matrix(&x),
            &h.length_scales
                .iter()
                .zip(&model.normalization.scale)
                .map(|(l, s)| l / s)
                .collect::<Vec<_>>(),
        );
        for i in 0..50 {
            expected[(i, i)] += model.effective_jitter;
        }
        let deviation = (&reconstructed - &expected).amax();
        assert!(deviation <= 1e-10, "max deviation {deviation}");
    }

    #[test]
    fn far_query_reverts_to_prior() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (x, y) = random_dataset(&mut rng, 30, 2, 2);
        let h = RbfHyperparams::isotropic(2, 0.5, 1e-6);
        let model = fit(x, y, &h).unwrap();
        let (mean, var) = model.predict(&[1e4, -1e4]);
        assert!(mean.amax() <= 1e-10);
        assert_abs_diff_eq!(var, 1.0, epsilon = 1e-10);
    }

    #[test]
    fn near_noiseless_interpolation() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let (x, y) = random_dataset(&mut rng, 20, 2, 2);
        let h = RbfHyperparams::isotropic(2, 1.5, 1e-12);
        let model = fit(x.clone(), y.clone(), &h).unwrap();
        let query: Vec<f64> = x.row(7).iter().cloned().collect();
        let (mean, var) = model.predict(&query);
        for j in 0..2 {
            assert!(
                (mean[j] - y[(7, j)]).abs() <= 1e-5,
                "output {j}: {} vs {}",
                mean[j],
                y[(7, j)]
            );
        }
        assert!(var <= 1e-6, "variance {var}");
    }

    #[test]
    fn small_model_matches_dense_inverse_oracle() {
        let x = DMatrix::from_row_slice(3, 2, &[0.0, 0.0, 1.0, -0.5, -0.7, 0.8]);
        let y = DMatrix::from_row_slice(3, 2, &[1.0, -1.0, 0.5, 0.25, -0.3, 0.9]);
        let h = RbfHyperparams {
            length_scales: vec![0.9, 1.3],
            noise: 1e-4,
        };
        let model = fit(x.clone(), y.clone(), &h).unwrap();

        // oracle: explicit inverse of the raw-feature Gram
        let n = 3;
        let row = |i: usize| -> Vec<f64> { x.row(i).iter().cloned().collect() };
        let mut k = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                k[(i, j)] = rbf_kernel(&row(i), &row(j), &h);
            }
            k[(i, i)] += h.noise;
        }
        let k_inv = k.try_inverse().unwrap();
        let query = vec![0.2, 0.1];
        let k_star = DVector::from_fn(n, |i, _| rbf_kernel(&query, &row(i), &h));
        let oracle_mean = y.transpose() * &k_inv * &k_star;
        let oracle_var = 1.0 - (k_star.transpose() * &k_inv * &k_star)[(0, 0)];

        let (mean, var) = model.predict(&query);
        for j in 0..2 {
            assert_abs_diff_eq!(mean[j], oracle_mean[j], epsilon = 1e-8);
        }
        assert_abs_diff_eq!(var, oracle_var, epsilon = 1e-8);
    }

    #[test]
    fn two_point_joint_density_conditional() {
        // one training point + one query: the prediction must equal the
        // Gaussian conditional of the 2×2 joint covariance
        let h = RbfHyperparams::isotropic(1, 0.8, 1e-3);
        let x_train = 0.4;
        let y_train = 1.7;
        let model = fit(
            DMatrix::from_row_slice(1, 1, &[x_train]),
            DMatrix::from_row_slice(1, 1, &[y_train]),
            &h,
        )
        .unwrap();
        let x_query = -0.3;
        let k11 = 1.0 + h.noise;
        let k12 = rbf_kernel(&[x_train], &[x_query], &h);
        let conditional_mean = k12 / k11 * y_train;
        let conditional_var = 1.0 - k12 * k12 / k11;
        let (mean, var) = model.predict(&[x_query]);
        assert_abs_diff_eq!(mean[0], conditional_mean, epsilon = 1e-10);
        assert_abs_diff_eq!(var, conditional_var, epsilon = 1e-10);
    }

    #[test]
    fn random_grams_succeed_with_small_jitter() {
        let mut rng = ChaCha8Rng::seed_from_u64(100);
        for round in 0..100 {
            let n = rng.random_range(5..=100);
            let d = rng.random_range(1..=12);
            let x = DMatrix::from_fn(n, d, |_, _| rng.random_range(-3.0..3.0));
            let y = DMatrix::from_fn(n, 1, |i, _| f64::cos(x[(i, 0)]));
            let h = RbfHyperparams::isotropic(d, 1.0, 1e-6);
            let model = fit(x, y, &h).expect("fit failed");
            assert!(
                model.effective_jitter <= 1e-6,
                "round {round}: jitter escalated to {}",
                model.effective_jitter
            );
        }
    }

    #[test]
    fn prediction_is_continuous_in_query() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let (x, y) = random_dataset(&mut rng, 40, 3, 2);
        let h = RbfHyperparams::isotropic(3, 0.5, 1e-6);
        let model = fit(x, y, &h).unwrap();
        let q = [0.3, -0.4, 0.9];
        let (m0, _) = model.predict(&q);
        let (m1, _) = model.predict(&[q[0] + 1e-9, q[1], q[2]]);
        assert!((m1 - m0).amax() <= 1e-6);
    }

    #[test]
    fn lml_data_fit_vanishes_for_zero_targets() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let (x, _) = random_dataset(&mut rng, 25, 2, 1);
        let h = RbfHyperparams::isotropic(2, 1.0, 1e-4);
        let zero = fit(x.clone(), DMatrix::zeros(25, 1), &h).unwrap();
        let log_det_half: f64 = (0..25).map(|i| zero.cholesky_factor()[(i, i)].ln()).sum();
        let expected = -log_det_half - 0.5 * 25.0 * std::f64::consts::TAU.ln();
        assert_abs_diff_eq!(log_marginal_likelihood(&zero), expected, epsilon = 1e-10);
    }

    #[test]
    fn length_scale_search_never_regresses() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let (x, y) = random_dataset(&mut rng, 40, 2, 2);
        let h0 = RbfHyperparams::isotropic(2, 3.0, 1e-4);
        let fitted = fit_length_scales(&x, &y, &h0).unwrap();
        let lml0 = log_marginal_likelihood(&fit(x.clone(), y.clone(), &h0).unwrap());
        let lml1 = log_marginal_likelihood(&fit(x, y, &fitted).unwrap());
        assert!(lml1 >= lml0, "{lml1} < {lml0}");
    }

    #[test]
    fn synthetic_length_scale_recovery() {
        // draw a function from a known GP with ℓ=0.5 and check the search
        // lands in the right decade
        let truth = 0.5;
        let n = 200;
        let mut rng = ChaCha8Rng::seed_from_u64(57);
        let x = DMatrix::from_fn(n, 1, |_, _| rng.random_range(-3.0..3.0));
        let h_true = RbfHyperparams::isotropic(1, truth, 1e-8);
        let row = |i: usize| -> Vec<f64> { vec![x[(i, 0)]] };
        let mut k = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                k[(i, j)] = rbf_kernel(&row(i), &row(j), &h_true);
            }
            k[(i, i)] += 1e-8;
        }
        let l = Cholesky::new(k).unwrap();
        let noise_vec = DVector::from_fn(n, |_, _| {
            // Box–Muller from uniform draws keeps the test self-contained
            let u1: f64 = rng.random_range(1e-12..1.0);
            let u2: f64 = rng.random_range(0.0..1.0);
            (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
        });
        let sample = l.l_dirty().lower_triangle() * noise_vec;
        let y = DMatrix::from_fn(n, 1, |i, _| sample[i]);

        let h0 = RbfHyperparams::isotropic(1, 1.0, 1e-6);
        let fitted = fit_length_scales(&x, &y, &h0).unwrap();
        let recovered = fitted.length_scales[0];
        assert!(
            (0.25..=1.0).contains(&recovered),
            "recovered length scale {recovered}"
        );
    }

    #[test]
    fn model_round_trips_through_disk() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let (x, y) = random_dataset(&mut rng, 30, 4, 2);
        let h = RbfHyperparams::isotropic(4, 1.2, 1e-5);
        let model = fit(x, y, &h).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.gp");
        save_model(&model, &path).unwrap();
        let loaded = load_model(&path).unwrap();
        for trial in 0..20 {
            let q: Vec<f64> = (0..4)
                .map(|k| ((trial * 4 + k) as f64 * 0.37).sin() * 2.0)
                .collect();
            let (m0, v0) = model.predict(&q);
            let (m1, v1) = loaded.predict(&q);
            assert!((m1 - m0).amax() <= 1e-10);
            assert!((v1 - v0).abs() <= 1e-10);
        }
        // a second save of the loaded model is byte-identical
        let path2 = dir.path().join("model2.gp");
        save_model(&loaded, &path2).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&path2).unwrap());
    }

    proptest! {
        #[test]
        fn kernel_is_symmetric(
            a in proptest::collection::vec(-5.0..5.0f64, 4),
            b in proptest::collection::vec(-5.0..5.0f64, 4),
            l in 0.2..3.0f64,
        ) {
            let h = RbfHyperparams::isotropic(4, l, 0.0);
            prop_assert_eq!(rbf_kernel(&a, &b, &h), rbf_kernel(&b, &a, &h));
        }

        #[test]
        fn variance_is_bounded(
            qx in -4.0..4.0f64,
            qy in -4.0..4.0f64,
            seed in 0u64..50,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = rng.random_range(2..25);
            let x = DMatrix::from_fn(n, 2, |_, _| rng.random_range(-2.0..2.0));
            let y = DMatrix::from_fn(n, 1, |i, _| x[(i, 0)] + x[(i, 1)]);
            let h = RbfHyperparams::isotropic(2, 0.8, 1e-6);
            let model = fit(x, y, &h).unwrap();
            let (_, var) = model.predict(&[qx, qy]);
            prop_assert!(var >= 0.0);
            prop_assert!(var <= 1.0 + 1e-12);
        }
    }
}
