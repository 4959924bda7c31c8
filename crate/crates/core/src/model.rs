//! FIR data model, least-squares and regularized least-squares estimators,
//! exact mean-square-error expressions and the fit metric.
//!
//! Everything here works on `n`-dimensional quantities (`ΦᵀΦ`, `ΦᵀY`, `n×n`
//! solves) plus `O(N n²)` products with `Φ`; no `N×N` matrix is formed.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::criteria::CriterionKind;
use crate::error::{Error, Result};
use crate::linalg::{self, LuFactor};
use crate::scalar::Real;

/// True impulse response and noise variance of a simulated system.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemTruth<T: Real> {
    pub theta0: DVector<T>,
    pub sigma2: T,
}

impl<T: Real> SystemTruth<T> {
    pub fn new(theta0: DVector<T>, sigma2: T) -> Result<Self> {
        if theta0.is_empty() {
            return Err(Error::Dimension("impulse response must have n >= 1".into()));
        }
        if theta0.iter().any(|x| !x.is_finite_value()) {
            return Err(Error::InvalidArgument("impulse response has non-finite entries".into()));
        }
        check_sigma2(sigma2)?;
        Ok(Self { theta0, sigma2 })
    }

    pub fn n(&self) -> usize {
        self.theta0.len()
    }
}

/// Output vector `Y` and regression matrix `Φ` (`N×n`).
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T: Real> {
    y: DVector<T>,
    phi: DMatrix<T>,
}

impl<T: Real> Dataset<T> {
    /// Validates shapes and finiteness. Column rank is checked lazily by the
    /// estimators that need `(ΦᵀΦ)⁻¹`.
    pub fn new(y: DVector<T>, phi: DMatrix<T>) -> Result<Self> {
        let (rows, cols) = phi.shape();
        if cols == 0 {
            return Err(Error::Dimension("regression matrix has no columns".into()));
        }
        if rows != y.len() {
            return Err(Error::Dimension(format!(
                "Y has {} entries but Phi has {} rows",
                y.len(),
                rows
            )));
        }
        if rows < cols {
            return Err(Error::Dimension(format!("N = {rows} is smaller than n = {cols}")));
        }
        if y.iter().chain(phi.iter()).any(|x| !x.is_finite_value()) {
            return Err(Error::InvalidArgument("dataset has non-finite entries".into()));
        }
        Ok(Self { y, phi })
    }

    /// Builds the FIR dataset from input/output records `u(0..N)`, `y(1..=N)`.
    ///
    /// With `burn_in` the first `n` rows (those touching the zero initial
    /// conditions) are dropped.
    pub fn from_signals(u: &[T], y: &[T], n: usize, burn_in: bool) -> Result<Self> {
        let big_n = y.len();
        let phi = build_regressor(u, n, big_n)?;
        let y = DVector::from_column_slice(y);
        if burn_in {
            if big_n < 2 * n {
                return Err(Error::Dimension(format!(
                    "burn-in of {n} rows leaves fewer than n rows (N = {big_n})"
                )));
            }
            let keep = big_n - n;
            return Self::new(y.rows(n, keep).into_owned(), phi.rows(n, keep).into_owned());
        }
        Self::new(y, phi)
    }

    pub fn y(&self) -> &DVector<T> {
        &self.y
    }

    pub fn phi(&self) -> &DMatrix<T> {
        &self.phi
    }

    /// Number of samples `N`.
    pub fn n_samples(&self) -> usize {
        self.phi.nrows()
    }

    /// FIR order `n`.
    pub fn n_params(&self) -> usize {
        self.phi.ncols()
    }
}

/// Convergence record of a hyperparameter search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerDiagnostics {
    pub iterations: usize,
    pub evaluations: usize,
    pub restarts: usize,
    pub converged: bool,
    /// At least one coordinate of the winner sits on its box bound.
    pub boundary: bool,
    pub gradient_norm: f64,
    pub winning_restart: usize,
}

/// Outcome of one hyperparameter estimation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport<T: Real> {
    pub eta_hat: Vec<T>,
    pub criterion_kind: CriterionKind,
    pub criterion_value: T,
    pub theta_hat: Vec<T>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub fit: Option<T>,
    pub optimizer_diagnostics: OptimizerDiagnostics,
}

/// Row `t` (1-based) of the result is `[u(t-1), ..., u(t-n)]`, zero for negative time.
pub fn build_regressor<T: Real>(u: &[T], n: usize, big_n: usize) -> Result<DMatrix<T>> {
    if n == 0 {
        return Err(Error::Dimension("FIR order n must be at least 1".into()));
    }
    if n > big_n {
        return Err(Error::Dimension(format!("n = {n} exceeds N = {big_n}")));
    }
    if u.len() < big_n {
        return Err(Error::Dimension(format!(
            "input has {} samples, need u(0..{big_n})",
            u.len()
        )));
    }
    Ok(DMatrix::from_fn(big_n, n, |row, col| {
        // row index r is time t = r + 1; column c holds u(t - 1 - c) = u(r - c)
        if row >= col {
            u[row - col]
        } else {
            T::zero()
        }
    }))
}

/// Least-squares estimate `(ΦᵀΦ)⁻¹ΦᵀY`.
pub fn ls_estimate<T: Real>(d: &Dataset<T>) -> Result<DVector<T>> {
    let gram = d.phi.tr_mul(&d.phi);
    let cond = linalg::spd_condition(&gram);
    let chol = linalg::conditioned_cholesky(&gram, cond)?;
    Ok(chol.solve(&d.phi.tr_mul(&d.y)))
}

/// Unbiased noise-variance estimate `‖Y − Φθ̂ᴸˢ‖²/(N − n)` for pipelines where σ² is unknown.
pub fn noise_variance_estimate<T: Real>(d: &Dataset<T>) -> Result<T> {
    let (big_n, n) = (d.n_samples(), d.n_params());
    if big_n <= n {
        return Err(Error::Dimension(format!("need N > n to estimate the noise variance (N = {big_n}, n = {n})")));
    }
    let theta = ls_estimate(d)?;
    let resid = &d.y - &d.phi * theta;
    Ok(resid.norm_squared() / T::from_usize_lossy(big_n - n))
}

/// Regularized least squares `PΦᵀ(ΦPΦᵀ + σ²I)⁻¹Y`, realized as `Hθ = PΦᵀY` with
/// `H = PΦᵀΦ + σ²I`, which stays exact for singular `P`.
pub fn rls_estimate<T: Real>(d: &Dataset<T>, p: &DMatrix<T>, sigma2: T) -> Result<DVector<T>> {
    check_kernel(p, d.n_params())?;
    check_sigma2(sigma2)?;
    let gram = d.phi.tr_mul(&d.phi);
    let h = regularized_gain(p, &gram, sigma2);
    let rhs = p * d.phi.tr_mul(&d.y);
    Ok(LuFactor::new(h, "P ΦᵀΦ + σ²I")?.solve(&rhs))
}

/// Mean-square-error matrix `E(θ̂ᴿ − θ₀)(θ̂ᴿ − θ₀)ᵀ`, split as bias outer product plus covariance.
pub fn mse_matrix<T: Real>(
    p: &DMatrix<T>,
    phi: &DMatrix<T>,
    theta0: &DVector<T>,
    sigma2: T,
) -> Result<DMatrix<T>> {
    let parts = MseParts::new(p, phi, theta0, sigma2)?;
    let bias = &parts.bias;
    Ok(bias * bias.transpose() + (&parts.gain * parts.gain.transpose()) * sigma2)
}

/// `MSEg(P) = ‖PΦᵀQ⁻¹Φθ₀ − θ₀‖² + σ²Tr(PΦᵀQ⁻¹Q⁻ᵀΦPᵀ)`.
pub fn mseg_exact<T: Real>(
    p: &DMatrix<T>,
    phi: &DMatrix<T>,
    theta0: &DVector<T>,
    sigma2: T,
) -> Result<T> {
    let parts = MseParts::new(p, phi, theta0, sigma2)?;
    Ok(parts.bias.norm_squared() + parts.gain.norm_squared() * sigma2)
}

/// `MSEy(P) = ‖Φ(PΦᵀQ⁻¹Φθ₀ − θ₀)‖² + Nσ² + σ²Tr(ΦPΦᵀQ⁻¹Q⁻ᵀΦPᵀΦᵀ)`.
pub fn msey_exact<T: Real>(
    p: &DMatrix<T>,
    phi: &DMatrix<T>,
    theta0: &DVector<T>,
    sigma2: T,
) -> Result<T> {
    let parts = MseParts::new(p, phi, theta0, sigma2)?;
    let big_n = T::from_usize_lossy(phi.nrows());
    let bias_out = (phi * &parts.bias).norm_squared();
    // ‖ΦL‖²_F = Σ_k ‖Φ ℓ_k‖² over the N columns ℓ_k of L; grouped through ΦᵀΦ.
    let gram = phi.tr_mul(phi);
    let var_out = linalg::frobenius_inner(&(&gram * &parts.gain), &parts.gain);
    Ok(bias_out + big_n * sigma2 + var_out * sigma2)
}

/// Shared pieces of the exact MSE: `L = PΦᵀQ⁻¹ = H⁻¹PΦᵀ` (`n×N`) and the bias `(LΦ − I)θ₀`.
struct MseParts<T: Real> {
    gain: DMatrix<T>,
    bias: DVector<T>,
}

impl<T: Real> MseParts<T> {
    fn new(p: &DMatrix<T>, phi: &DMatrix<T>, theta0: &DVector<T>, sigma2: T) -> Result<Self> {
        let n = phi.ncols();
        check_kernel(p, n)?;
        check_sigma2(sigma2)?;
        if theta0.len() != n {
            return Err(Error::Dimension(format!(
                "theta0 has {} entries, expected {n}",
                theta0.len()
            )));
        }
        let gram = phi.tr_mul(phi);
        let h = LuFactor::new(regularized_gain(p, &gram, sigma2), "P ΦᵀΦ + σ²I")?;
        let gain = h.solve_matrix(&(p * phi.transpose()));
        let bias = &gain * (phi * theta0) - theta0;
        Ok(Self { gain, bias })
    }
}

/// Fit `100·(1 − ‖θ̂ − θ₀‖ / ‖θ₀ − θ̄₀·1‖)`.
pub fn fit_metric<T: Real>(theta_hat: &DVector<T>, theta0: &DVector<T>) -> Result<T> {
    if theta_hat.len() != theta0.len() {
        return Err(Error::Dimension(format!(
            "estimate has {} entries, truth has {}",
            theta_hat.len(),
            theta0.len()
        )));
    }
    if theta0.is_empty() {
        return Err(Error::UndefinedFit);
    }
    let mean = theta0.mean();
    let spread = theta0.map(|x| x - mean).norm();
    if spread == T::zero() {
        return Err(Error::UndefinedFit);
    }
    Ok(T::lit(100.0) * (T::one() - (theta_hat - theta0).norm() / spread))
}

/// One point of the regularization-gain curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GainPoint<T> {
    pub beta: T,
    pub mseg: T,
    pub msey: T,
}

/// MSEg and MSEy of the RLS estimator with regularization `σ²P⁻¹ = βA`, through
/// the bias/variance split with `C(β) = ΦᵀΦ + βA`.
pub fn regularization_gain_curve<T: Real>(
    a: &DMatrix<T>,
    beta_grid: &[T],
    phi: &DMatrix<T>,
    theta0: &DVector<T>,
    sigma2: T,
) -> Result<Vec<GainPoint<T>>> {
    let n = phi.ncols();
    check_kernel(a, n)?;
    check_sigma2(sigma2)?;
    if theta0.len() != n {
        return Err(Error::Dimension(format!("theta0 has {} entries, expected {n}", theta0.len())));
    }
    if let Some(bad) = beta_grid.iter().find(|b| !(**b > T::zero())) {
        return Err(Error::InvalidArgument(format!(
            "beta grid entries must be positive, got {}",
            bad.as_f64()
        )));
    }
    let gram = phi.tr_mul(phi);
    let big_n = T::from_usize_lossy(phi.nrows());
    let a_theta = a * theta0;
    beta_grid
        .iter()
        .map(|&beta| {
            let c = LuFactor::new(&gram + a * beta, "ΦᵀΦ + βA")?;
            let bias = c.solve(&a_theta) * beta;
            let c_inv_gram = c.solve_matrix(&gram);
            // C⁻¹ G C⁻¹ = (C⁻¹G)C⁻¹; its trace and its trace against G
            let cov = c.solve_matrix(&c_inv_gram.transpose()).transpose();
            let mseg = bias.norm_squared() + cov.trace() * sigma2;
            let msey = bias.dot(&(&gram * &bias))
                + linalg::trace_of_product(&cov, &gram) * sigma2
                + big_n * sigma2;
            Ok(GainPoint { beta, mseg, msey })
        })
        .collect()
}

/// `H = PG + σ²I`.
pub(crate) fn regularized_gain<T: Real>(p: &DMatrix<T>, gram: &DMatrix<T>, sigma2: T) -> DMatrix<T> {
    let mut h = p * gram;
    for i in 0..h.nrows() {
        h[(i, i)] += sigma2;
    }
    h
}

fn check_kernel<T: Real>(p: &DMatrix<T>, n: usize) -> Result<()> {
    if p.shape() != (n, n) {
        return Err(Error::Dimension(format!(
            "kernel matrix is {}x{}, expected {n}x{n}",
            p.nrows(),
            p.ncols()
        )));
    }
    linalg::check_psd(p)
}

pub(crate) fn check_sigma2<T: Real>(sigma2: T) -> Result<()> {
    if !(sigma2 > T::zero()) || !sigma2.is_finite_value() {
        return Err(Error::InvalidArgument(format!(
            "noise variance must be positive, got {}",
            sigma2.as_f64()
        )));
    }
    Ok(())
}
