//! Physical-model inference: rescaled least squares solved in recursive
//! information-filter form, with Gaussian confidence intervals.
//!
//! Each measurement contributes a row `h / (y + b)` and a rescaled
//! observation `y / (y + b)`; the state accumulates the normal equations
//! `lambda = sum r r^T`, `beta = sum r y~`. Solving with a small ridge gives
//! the rate estimate and the covariance diagonal used for the interval
//! half-widths `z * sqrt(sigma_kk)`.

use nalgebra::{DMatrix, DVector};
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

use crate::confidence::Interval;

#[derive(Debug, Error)]
pub enum EstimatorError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("singular system: normal equations not positive definite even with ridge {ridge}")]
    SingularSystem { ridge: f64 },
}

/// Information-form accumulator for the rescaled least-squares problem.
#[derive(Debug, Clone)]
pub struct EstimatorState {
    lambda: DMatrix<f64>,
    beta: DVector<f64>,
    n_measurements: usize,
    bias: f64,
}

/// Rate estimates and covariance diagonal from a solve. `mu_hat` is clamped
/// at zero from below (rates are nonnegative).
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorSummary {
    pub mu_hat: Vec<f64>,
    pub sigma_diag: Vec<f64>,
}

/// Rescale a sensitivity column and observed count by the plug-in variance
/// estimate `y + b`: returns `(h / (y + b), y / (y + b))`.
pub fn rescaled_row(h_col: &[f64], y: u64, bias: f64) -> Result<(Vec<f64>, f64), EstimatorError> {
    if !(bias > 0.0) {
        return Err(EstimatorError::InvalidArgument(format!(
            "bias must be > 0, got {bias}"
        )));
    }
    let denom = y as f64 + bias;
    let row = h_col.iter().map(|h| h / denom).collect();
    Ok((row, y as f64 / denom))
}

impl EstimatorState {
    pub fn new(n_cells: usize, bias: f64) -> Result<Self, EstimatorError> {
        if n_cells == 0 {
            return Err(EstimatorError::InvalidArgument("n_cells must be >= 1".into()));
        }
        if !(bias > 0.0) {
            return Err(EstimatorError::InvalidArgument(format!(
                "bias must be > 0, got {bias}"
            )));
        }
        Ok(EstimatorState {
            lambda: DMatrix::zeros(n_cells, n_cells),
            beta: DVector::zeros(n_cells),
            n_measurements: 0,
            bias,
        })
    }

    pub fn n_cells(&self) -> usize {
        self.beta.len()
    }

    pub fn n_measurements(&self) -> usize {
        self.n_measurements
    }

    pub fn bias(&self) -> f64 {
        self.bias
    }

    /// Rank-1 information update: `lambda += r r^T`, `beta += r * y~`.
    pub fn update(&mut self, row: &[f64], y_tilde: f64) -> Result<(), EstimatorError> {
        if row.len() != self.n_cells() {
            return Err(EstimatorError::DimensionMismatch {
                expected: self.n_cells(),
                got: row.len(),
            });
        }
        let r = DVector::from_column_slice(row);
        self.lambda.ger(1.0, &r, &r, 1.0);
        self.beta.axpy(y_tilde, &r, 1.0);
        self.n_measurements += 1;
        Ok(())
    }

    /// Fold a whole dwell at one configuration into the state.
    ///
    /// All sub-interval measurements at a fixed configuration share the same
    /// sensitivity direction, so their rank-1 updates collapse into a single
    /// scaled outer product. Algebraically identical to calling [`update`]
    /// once per count with the row `(sub_dt * h) / (y_j + b)`.
    pub fn update_dwell(
        &mut self,
        h_col: &[f64],
        counts: &[u64],
        sub_dt: f64,
    ) -> Result<(), EstimatorError> {
        if h_col.len() != self.n_cells() {
            return Err(EstimatorError::DimensionMismatch {
                expected: self.n_cells(),
                got: h_col.len(),
            });
        }
        if !(sub_dt > 0.0) {
            return Err(EstimatorError::InvalidArgument(format!(
                "sub_dt must be > 0, got {sub_dt}"
            )));
        }
        let mut w = 0.0;
        let mut v = 0.0;
        for &y in counts {
            let denom = y as f64 + self.bias;
            let scale = sub_dt / denom;
            w += scale * scale;
            v += scale * (y as f64 / denom);
        }
        let h = DVector::from_column_slice(h_col);
        self.lambda.ger(w, &h, &h, 1.0);
        self.beta.axpy(v, &h, 1.0);
        self.n_measurements += counts.len();
        Ok(())
    }

    /// Default ridge: `1e-9 * trace(lambda) / |S|`.
    pub fn default_ridge(&self) -> f64 {
        1e-9 * self.lambda.trace() / self.n_cells() as f64
    }

    /// Solve the regularized normal equations by Cholesky factorization.
    pub fn solve(&self, ridge: Option<f64>) -> Result<PosteriorSummary, EstimatorError> {
        let ridge = ridge.unwrap_or_else(|| self.default_ridge());
        if !(ridge >= 0.0) {
            return Err(EstimatorError::InvalidArgument(format!(
                "ridge must be >= 0, got {ridge}"
            )));
        }
        let n = self.n_cells();
        let mut reg = self.lambda.clone();
        for i in 0..n {
            reg[(i, i)] += ridge;
        }
        let chol = nalgebra::Cholesky::new(reg)
            .ok_or(EstimatorError::SingularSystem { ridge })?;
        let mu = chol.solve(&self.beta);
        let cov = chol.inverse();
        let sigma_diag: Vec<f64> = (0..n).map(|i| cov[(i, i)]).collect();
        if sigma_diag.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
            return Err(EstimatorError::SingularSystem { ridge });
        }
        Ok(PosteriorSummary {
            mu_hat: mu.iter().map(|m| m.max(0.0)).collect(),
            sigma_diag,
        })
    }
}

/// Two-sided Gaussian interval `(max{0, mu - z sqrt(sigma)}, mu + z sqrt(sigma))`.
pub fn gaussian_interval(mu_hat: f64, sigma_kk: f64, z: f64) -> Result<Interval, EstimatorError> {
    if !(sigma_kk > 0.0) {
        return Err(EstimatorError::InvalidArgument(format!(
            "sigma_kk must be > 0, got {sigma_kk}"
        )));
    }
    if !(z >= 0.0) {
        return Err(EstimatorError::InvalidArgument(format!("z must be >= 0, got {z}")));
    }
    let half = z * sigma_kk.sqrt();
    Interval::new((mu_hat - half).max(0.0), (mu_hat + half).max(0.0))
        .map_err(|e| EstimatorError::InvalidArgument(e.to_string()))
}

/// Two-sided standard-normal quantile `z = Phi^{-1}(1 - delta/2)`. A fixed
/// confidence parameter alpha maps through the same quantile.
pub fn alpha_of_delta(delta: f64) -> Result<f64, EstimatorError> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(EstimatorError::InvalidArgument(format!(
            "delta must lie in (0, 1), got {delta}"
        )));
    }
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    Ok(normal.inverse_cdf(1.0 - delta / 2.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    use crate::env::RngSeed;

    #[test]
    fn rescaled_row_hand_values() {
        let (row, y_tilde) = rescaled_row(&[0.25], 3, 1.0).unwrap();
        assert!((row[0] - 0.0625).abs() < 1e-15);
        assert!((y_tilde - 0.75).abs() < 1e-15);

        let (row, y_tilde) = rescaled_row(&[0.5, 0.1], 0, 1.0).unwrap();
        assert_eq!(row, vec![0.5, 0.1]);
        assert_eq!(y_tilde, 0.0);

        assert!(rescaled_row(&[1.0], 3, 0.0).is_err());
    }

    #[test]
    fn update_is_a_rank_one_outer_product() {
        let mut st = EstimatorState::new(3, 1.0).unwrap();
        let s = 2.0;
        st.update(&[0.0, s, 0.0], 0.5).unwrap();
        assert_eq!(st.lambda[(1, 1)], s * s);
        assert_eq!(st.lambda[(0, 0)], 0.0);
        assert_eq!(st.beta[1], s * 0.5);

        // Two identical updates double lambda and beta.
        let mut twice = EstimatorState::new(3, 1.0).unwrap();
        twice.update(&[0.0, s, 0.0], 0.5).unwrap();
        twice.update(&[0.0, s, 0.0], 0.5).unwrap();
        assert_eq!(twice.lambda[(1, 1)], 2.0 * s * s);
        assert_eq!(twice.beta[1], 2.0 * s * 0.5);

        assert!(st.update(&[1.0, 2.0], 0.1).is_err());
    }

    #[test]
    fn updates_commute_to_rounding() {
        let mut rng = RngSeed(31).stream(&[20]);
        let n = 6;
        let rows: Vec<(Vec<f64>, f64)> = (0..40)
            .map(|_| {
                let r: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
                (r, rng.random::<f64>())
            })
            .collect();
        let mut fwd = EstimatorState::new(n, 1.0).unwrap();
        let mut rev = EstimatorState::new(n, 1.0).unwrap();
        for (r, y) in &rows {
            fwd.update(r, *y).unwrap();
        }
        for (r, y) in rows.iter().rev() {
            rev.update(r, *y).unwrap();
        }
        let scale = fwd.lambda.norm();
        assert!((&fwd.lambda - &rev.lambda).norm() <= 1e-12 * scale);
        assert!((&fwd.beta - &rev.beta).norm() <= 1e-12 * fwd.beta.norm());
    }

    #[test]
    fn dwell_update_matches_per_measurement_updates() {
        let mut rng = RngSeed(32).stream(&[21]);
        let n = 4;
        let h: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let counts: Vec<u64> = (0..16).map(|_| rng.random_range(0..400)).collect();
        let sub_dt = 0.5;

        let mut batched = EstimatorState::new(n, 1.0).unwrap();
        batched.update_dwell(&h, &counts, sub_dt).unwrap();

        let mut sequential = EstimatorState::new(n, 1.0).unwrap();
        let scaled: Vec<f64> = h.iter().map(|v| v * sub_dt).collect();
        for &y in &counts {
            let (row, y_tilde) = rescaled_row(&scaled, y, 1.0).unwrap();
            sequential.update(&row, y_tilde).unwrap();
        }
        assert!((&batched.lambda - &sequential.lambda).norm() <= 1e-12 * sequential.lambda.norm());
        assert!((&batched.beta - &sequential.beta).norm() <= 1e-12 * sequential.beta.norm());
        assert_eq!(batched.n_measurements(), sequential.n_measurements());
    }

    #[test]
    fn identity_system_solves_to_input() {
        let mut st = EstimatorState::new(3, 1.0).unwrap();
        for (i, v) in [4.0, 5.0, 6.0].iter().enumerate() {
            let mut row = vec![0.0; 3];
            row[i] = 1.0;
            st.update(&row, *v).unwrap();
        }
        let sol = st.solve(Some(0.0)).unwrap();
        for (got, want) in sol.mu_hat.iter().zip([4.0, 5.0, 6.0]) {
            assert!((got - want).abs() < 1e-12);
        }
        assert!(sol.sigma_diag.iter().all(|s| (s - 1.0).abs() < 1e-12));
    }

    #[test]
    fn two_by_two_direct_inversion() {
        // lambda = [[2,1],[1,2]], beta = [3,3] -> mu = [1,1], sigma = 2/3.
        let mut st = EstimatorState::new(2, 1.0).unwrap();
        // Decompose lambda into rank-1 terms: [1,1] and [1,0],[0,1].
        st.update(&[1.0, 1.0], 2.0).unwrap();
        st.update(&[1.0, 0.0], 1.0).unwrap();
        st.update(&[0.0, 1.0], 1.0).unwrap();
        let sol = st.solve(Some(0.0)).unwrap();
        assert!((sol.mu_hat[0] - 1.0).abs() < 1e-12);
        assert!((sol.mu_hat[1] - 1.0).abs() < 1e-12);
        assert!((sol.sigma_diag[0] - 2.0 / 3.0).abs() < 1e-12);
        assert!((sol.sigma_diag[1] - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn noiseless_counts_recover_rates() {
        // Pointwise rows with deterministic counts equal to their means.
        let mu = [80.0f64, 10.0, 250.0, 0.5];
        let tau = 1e4f64;
        let mut st = EstimatorState::new(4, 1.0).unwrap();
        for (i, m) in mu.iter().enumerate() {
            let mut h = vec![0.0; 4];
            h[i] = tau;
            let y = (m * tau).round() as u64;
            let (row, y_tilde) = rescaled_row(&h, y, 1.0).unwrap();
            st.update(&row, y_tilde).unwrap();
        }
        let sol = st.solve(None).unwrap();
        for (got, want) in sol.mu_hat.iter().zip(mu) {
            assert!((got - want).abs() <= 0.01 * want, "{got} vs {want}");
        }
    }

    #[test]
    fn empty_state_is_singular() {
        let st = EstimatorState::new(2, 1.0).unwrap();
        assert!(matches!(st.solve(None), Err(EstimatorError::SingularSystem { .. })));
    }

    #[test]
    fn sigma_shrinks_as_data_accumulates() {
        let mut rng = RngSeed(33).stream(&[22]);
        let n = 4;
        let mut st = EstimatorState::new(n, 1.0).unwrap();
        // Seed with one full pass so the system is invertible.
        for i in 0..n {
            let mut row = vec![0.01; n];
            row[i] = 1.0;
            st.update(&row, rng.random()).unwrap();
        }
        let mut prev = st.solve(None).unwrap().sigma_diag;
        for _ in 0..5 {
            for i in 0..n {
                let mut row = vec![0.01; n];
                row[i] = 1.0;
                st.update(&row, rng.random()).unwrap();
            }
            let cur = st.solve(None).unwrap().sigma_diag;
            for (c, p) in cur.iter().zip(&prev) {
                assert!(*c <= p * (1.0 + 1e-9), "sigma grew: {c} > {p}");
            }
            prev = cur;
        }
    }

    #[test]
    fn gaussian_interval_hand_values() {
        let iv = gaussian_interval(10.0, 4.0, 2.0).unwrap();
        assert_eq!((iv.lcb, iv.ucb), (6.0, 14.0));

        let iv = gaussian_interval(10.0, 4.0, 0.0).unwrap();
        assert_eq!((iv.lcb, iv.ucb), (10.0, 10.0));

        let iv = gaussian_interval(1.0, 4.0, 2.0).unwrap();
        assert_eq!((iv.lcb, iv.ucb), (0.0, 5.0));

        assert!(gaussian_interval(1.0, 0.0, 2.0).is_err());
    }

    #[test]
    fn quantile_hand_values() {
        assert!((alpha_of_delta(0.3173).unwrap() - 1.0).abs() < 1e-3);
        assert!((alpha_of_delta(0.0455).unwrap() - 2.0).abs() < 1e-3);
        assert!(alpha_of_delta(0.999_999).unwrap() < 2e-6);
        assert!(alpha_of_delta(0.0).is_err());
        assert!(alpha_of_delta(1.0).is_err());
    }
}
