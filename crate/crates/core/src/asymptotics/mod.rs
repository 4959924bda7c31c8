//! Large-`N` limits of the criteria: the functionals `W_g`, `W_y`, `W_B`,
//! their minimizers `η*`, the shifted criteria converging to them, and the
//! Monte Carlo convergence-rate experiment.

mod rates;

use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::criteria::{criterion_value, CriterionKind, DataMoments};
use crate::error::{Error, Result};
use crate::hyperopt::{chain_to_eta, heuristic_eta, minimize, require_convergence, Objective, OptimizerConfig};
use crate::kernels::{kernel_gradients, kernel_matrix, Bound, CoordinateKind, KernelSpec};
use crate::linalg::{self, LuFactor};
use crate::model::{check_sigma2, Dataset};
use crate::scalar::Real;

pub use rates::{convergence_rate_experiment, log_log_slope, median, simulate, RateExperimentConfig, RateRecord, RateResult, PAIR_SERIES};

/// Which limit functional.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum LimitKind {
    #[serde(rename = "g")]
    G,
    #[serde(rename = "y")]
    Y,
    #[serde(rename = "B", alias = "b")]
    B,
}

impl LimitKind {
    pub const ALL: [LimitKind; 3] = [LimitKind::G, LimitKind::Y, LimitKind::B];

    /// The functional a criterion converges to after shifting and scaling.
    pub fn of(kind: CriterionKind) -> LimitKind {
        match kind {
            CriterionKind::MseG | CriterionKind::SureG => LimitKind::G,
            CriterionKind::MseY | CriterionKind::SureY => LimitKind::Y,
            CriterionKind::Eb | CriterionKind::Eeb => LimitKind::B,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            LimitKind::G => "g",
            LimitKind::Y => "y",
            LimitKind::B => "B",
        }
    }
}

impl fmt::Display for LimitKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Limit `Σ` of `ΦᵀΦ/N`, true impulse response, noise variance and kernel family.
#[derive(Debug, Clone)]
pub struct LimitSpec<T: Real> {
    sigma: DMatrix<T>,
    sigma_inv: DMatrix<T>,
    theta0: DVector<T>,
    sigma2: T,
    family: KernelSpec<T>,
}

pub type LimitSpec64 = LimitSpec<f64>;

impl<T: Real> LimitSpec<T> {
    /// `sigma` must be symmetric positive definite and match `theta0` and the family order.
    pub fn new(sigma: DMatrix<T>, theta0: DVector<T>, sigma2: T, family: KernelSpec<T>) -> Result<Self> {
        let n = theta0.len();
        if sigma.shape() != (n, n) || family.n != n {
            return Err(Error::Dimension(format!(
                "Sigma is {}x{}, theta0 has {n} entries, kernel order is {}",
                sigma.nrows(),
                sigma.ncols(),
                family.n
            )));
        }
        check_sigma2(sigma2)?;
        if !linalg::is_exactly_symmetric(&sigma) {
            return Err(Error::InvalidArgument("Sigma must be symmetric".into()));
        }
        let chol = sigma
            .clone()
            .cholesky()
            .ok_or_else(|| Error::InvalidArgument("Sigma must be positive definite".into()))?;
        let sigma_inv = chol.inverse();
        family.validate()?;
        Ok(Self { sigma, sigma_inv, theta0, sigma2, family })
    }

    pub fn sigma(&self) -> &DMatrix<T> {
        &self.sigma
    }

    pub fn sigma_inv(&self) -> &DMatrix<T> {
        &self.sigma_inv
    }

    pub fn theta0(&self) -> &DVector<T> {
        &self.theta0
    }

    pub fn sigma2(&self) -> T {
        self.sigma2
    }

    pub fn family(&self) -> &KernelSpec<T> {
        &self.family
    }

    /// Weight `M` in `W = σ⁴aᵀMa − 2σ⁴Tr(MP⁻¹)`: `Σ⁻²` for g, `Σ⁻¹` for y.
    fn weight(&self, kind: LimitKind) -> DMatrix<T> {
        match kind {
            LimitKind::G => &self.sigma_inv * &self.sigma_inv,
            LimitKind::Y => self.sigma_inv.clone(),
            LimitKind::B => DMatrix::identity(self.theta0.len(), self.theta0.len()),
        }
    }
}

fn factor<T: Real>(p: &DMatrix<T>, n: usize) -> Result<LuFactor<T>> {
    if p.shape() != (n, n) {
        return Err(Error::Dimension(format!("P is {}x{}, expected {n}x{n}", p.nrows(), p.ncols())));
    }
    LuFactor::new(p.clone(), "P")
}

fn weighted_w<T: Real>(p: &DMatrix<T>, ls: &LimitSpec<T>, kind: LimitKind) -> Result<T> {
    let lu = factor(p, ls.theta0.len())?;
    let m = ls.weight(kind);
    let a = lu.solve(&ls.theta0);
    let s4 = ls.sigma2 * ls.sigma2;
    Ok((a.dot(&(&m * &a)) - linalg::trace_of_product(&m, &lu.inverse()) * T::lit(2.0)) * s4)
}

/// `σ⁴θ₀ᵀP⁻ᵀΣ⁻²P⁻¹θ₀ − 2σ⁴Tr(Σ⁻¹P⁻¹Σ⁻¹)`.
pub fn w_g<T: Real>(p: &DMatrix<T>, ls: &LimitSpec<T>) -> Result<T> {
    weighted_w(p, ls, LimitKind::G)
}

/// `σ⁴θ₀ᵀP⁻ᵀΣ⁻¹P⁻¹θ₀ − 2σ⁴Tr(Σ⁻¹P⁻¹)`.
pub fn w_y<T: Real>(p: &DMatrix<T>, ls: &LimitSpec<T>) -> Result<T> {
    weighted_w(p, ls, LimitKind::Y)
}

/// `θ₀ᵀP⁻¹θ₀ + log det P`.
pub fn w_b<T: Real>(p: &DMatrix<T>, theta0: &DVector<T>) -> Result<T> {
    let lu = factor(p, theta0.len())?;
    let (log_det, sign) = lu.log_abs_det();
    if sign < T::zero() {
        return Err(Error::Domain("det P is negative".into()));
    }
    Ok(theta0.dot(&lu.solve(theta0)) + log_det)
}

pub fn w_value<T: Real>(kind: LimitKind, p: &DMatrix<T>, ls: &LimitSpec<T>) -> Result<T> {
    match kind {
        LimitKind::B => w_b(p, &ls.theta0),
        _ => weighted_w(p, ls, kind),
    }
}

/// Unsymmetrized derivative of `W` with respect to the entries of `P`:
/// `2σ⁴P⁻ᵀMP⁻¹(P − θ₀θ₀ᵀ)P⁻ᵀ` with `M = Σ⁻², Σ⁻¹`, and
/// `P⁻ᵀ(Pᵀ − θ₀θ₀ᵀ)P⁻ᵀ` for `W_B`.
pub fn w_grad_p<T: Real>(kind: LimitKind, p: &DMatrix<T>, ls: &LimitSpec<T>) -> Result<DMatrix<T>> {
    let lu = factor(p, ls.theta0.len())?;
    let p_inv = lu.inverse();
    let p_inv_t = p_inv.transpose();
    let tt = &ls.theta0 * ls.theta0.transpose();
    Ok(match kind {
        LimitKind::B => &p_inv_t * (p.transpose() - tt) * &p_inv_t,
        _ => {
            let s4 = ls.sigma2 * ls.sigma2;
            &p_inv_t * ls.weight(kind) * &p_inv * (p - tt) * &p_inv_t * (s4 * T::lit(2.0))
        }
    })
}

/// `η ↦ W(P(η))` over the box of the family.
pub struct LimitObjective<'a, T: Real> {
    pub kind: LimitKind,
    pub ls: &'a LimitSpec<T>,
}

impl<T: Real> Objective<T> for LimitObjective<'_, T> {
    fn bounds(&self) -> Vec<Bound<T>> {
        self.ls.family.omega()
    }

    fn coordinate_kinds(&self) -> Vec<CoordinateKind> {
        self.ls.family.family.coordinate_kinds(self.ls.family.n)
    }

    fn value(&self, eta: &[T]) -> Result<T> {
        let p = kernel_matrix(&self.ls.family.with_eta(eta.to_vec()))?;
        w_value(self.kind, &p, self.ls)
    }

    fn value_grad(&self, eta: &[T]) -> Result<(T, Vec<T>)> {
        let spec = self.ls.family.with_eta(eta.to_vec());
        let p = kernel_matrix(&spec)?;
        let v = w_value(self.kind, &p, self.ls)?;
        let gp = w_grad_p(self.kind, &p, self.ls)?;
        Ok((v, chain_to_eta(&spec, &gp)?))
    }
}

/// `η* = argmin W(P(η))` over the family box.
pub fn limit_eta<T: Real>(kind: LimitKind, ls: &LimitSpec<T>, cfg: &OptimizerConfig) -> Result<Vec<T>> {
    let obj = LimitObjective { kind, ls };
    let start = heuristic_eta(&ls.family, Some(&ls.theta0));
    let outcome = minimize(&obj, Some(&start), cfg)?;
    require_convergence(&outcome)?;
    // a reference value has to be a stationary point, so skip unconverged near-ties
    let best = outcome
        .runs
        .iter()
        .filter(|r| r.converged)
        .min_by(|a, b| a.value.partial_cmp(&b.value).unwrap_or(std::cmp::Ordering::Equal))
        .expect("at least one converged run");
    Ok(best.eta.clone())
}

/// Left-hand sides of the stationarity systems:
/// `Tr(P⁻¹MP⁻¹(P − θ₀θ₀ᵀ)P⁻¹ ∂P/∂ηᵢ)` with `M = Σ⁻², Σ⁻¹` and
/// `Tr(P⁻¹(P − θ₀θ₀ᵀ)P⁻¹ ∂P/∂ηᵢ)` for B.
pub fn stationarity_residuals<T: Real>(kind: LimitKind, eta: &[T], ls: &LimitSpec<T>) -> Result<Vec<T>> {
    let spec = ls.family.with_eta(eta.to_vec());
    let p = kernel_matrix(&spec)?;
    let p_inv = factor(&p, ls.theta0.len())?.inverse();
    let tt = &ls.theta0 * ls.theta0.transpose();
    let outer = match kind {
        LimitKind::B => p_inv.clone(),
        _ => &p_inv * ls.weight(kind) * &p_inv,
    };
    let inner = outer * (&p - tt) * &p_inv;
    Ok(kernel_gradients(&spec)?.iter().map(|d| linalg::trace_of_product(&inner, d)).collect())
}

/// Power of `N` multiplying a criterion in its limit statement: 2 for the
/// g pair, 1 for the y pair, 0 for EB/EEB.
pub fn limit_scaling(kind: CriterionKind) -> i32 {
    match LimitKind::of(kind) {
        LimitKind::G => 2,
        LimitKind::Y => 1,
        LimitKind::B => 0,
    }
}

/// The criterion shifted by its data-dependent constants and scaled by the
/// power of `N` under which it converges to the matching `W`:
///
/// * `N²(MSEg − σ²Tr((ΦᵀΦ)⁻¹))`, `N²(F_Sg − σ²Tr((ΦᵀΦ)⁻¹))`
/// * `N(MSEy − (n+N)σ²)`, `N(F_Sy + YᵀΦ(ΦᵀΦ)⁻¹ΦᵀY − YᵀY − 2nσ²)`
/// * `EEB − (N−n) − (N−n)log σ² − log det ΦᵀΦ`
/// * `F_EB + (YᵀΦ(ΦᵀΦ)⁻¹ΦᵀY − YᵀY)/σ² − (N−n)log σ² − log det ΦᵀΦ`
pub fn shifted_criterion<T: Real>(
    kind: CriterionKind,
    p: &DMatrix<T>,
    d: &Dataset<T>,
    sigma2: T,
    theta0: Option<&DVector<T>>,
) -> Result<T> {
    let f = criterion_value(kind, p, d, sigma2, theta0)?;
    let m = DataMoments::from_dataset(d);
    let big_n = T::from_usize_lossy(m.n_samples());
    let n = T::from_usize_lossy(m.n_params());
    let fitted = || -> Result<T> { Ok(m.phi_t_y().dot(m.theta_ls()?)) };
    let log_term = || -> Result<T> { Ok((big_n - n) * sigma2.ln() + m.log_det_gram()?) };
    Ok(match kind {
        CriterionKind::MseG | CriterionKind::SureG => (f - m.gram_inv()?.trace() * sigma2) * big_n * big_n,
        CriterionKind::MseY => (f - (n + big_n) * sigma2) * big_n,
        CriterionKind::SureY => (f + fitted()? - m.y_t_y() - n * sigma2 * T::lit(2.0)) * big_n,
        CriterionKind::Eeb => f - (big_n - n) - log_term()?,
        CriterionKind::Eb => f + (fitted()? - m.y_t_y()) / sigma2 - log_term()?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::KernelFamily;
    use crate::criteria::{criterion_grad_p, dense};
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn ridge_spec(n: usize) -> KernelSpec<f64> {
        KernelSpec::new(KernelFamily::Ridge, vec![1.0], n).unwrap()
    }

    fn diag_ls() -> LimitSpec<f64> {
        let sigma = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 4.0]));
        LimitSpec::new(sigma, DVector::from_vec(vec![2.0, 1.0]), 1.0, ridge_spec(2)).unwrap()
    }

    #[test]
    fn hand_values() {
        let ls = diag_ls();
        let i2 = DMatrix::<f64>::identity(2, 2);
        assert_relative_eq!(w_g(&i2, &ls).unwrap(), (4.0 + 1.0 / 16.0) - 2.0 * (1.0 + 1.0 / 16.0), epsilon = 1e-14);
        let t = DVector::from_vec(vec![1.0, 1.0]);
        assert_relative_eq!(w_b(&i2, &t).unwrap(), 2.0, epsilon = 1e-14);
        let zero = LimitSpec::new(ls.sigma.clone(), DVector::zeros(2), 1.0, ridge_spec(2)).unwrap();
        let p = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let p_inv = p.clone().try_inverse().unwrap();
        let si = zero.sigma_inv().clone();
        assert_relative_eq!(w_g(&p, &zero).unwrap(), -2.0 * (&si * &p_inv * &si).trace(), epsilon = 1e-13);
        assert_relative_eq!(w_y(&p, &zero).unwrap(), -2.0 * (&si * &p_inv).trace(), epsilon = 1e-13);
    }

    #[test]
    fn ridge_limits_match_closed_forms() {
        let ls = diag_ls();
        let cfg = OptimizerConfig::default();
        let g = limit_eta(LimitKind::G, &ls, &cfg).unwrap();
        let y = limit_eta(LimitKind::Y, &ls, &cfg).unwrap();
        let b = limit_eta(LimitKind::B, &ls, &cfg).unwrap();
        assert_relative_eq!(g[0], 65.0 / 17.0, max_relative = 1e-7);
        assert_relative_eq!(y[0], 3.4, max_relative = 1e-7);
        assert_relative_eq!(b[0], 2.5, max_relative = 1e-7);
    }

    #[test]
    fn scaled_identity_limits_coincide() {
        let theta0 = DVector::from_vec(vec![1.0, -0.5, 0.25, 0.1]);
        let sigma = DMatrix::identity(4, 4) * 2.0;
        let cfg = OptimizerConfig::default();
        let ridge = LimitSpec::new(sigma.clone(), theta0.clone(), 0.5, ridge_spec(4)).unwrap();
        let etas: Vec<f64> = LimitKind::ALL.iter().map(|&k| limit_eta(k, &ridge, &cfg).unwrap()[0]).collect();
        for e in &etas {
            assert_relative_eq!(*e, theta0.norm_squared() / 4.0, max_relative = 1e-7);
        }
        let diag_spec = KernelSpec::new(KernelFamily::Diagonal, vec![1.0; 4], 4).unwrap();
        let diag = LimitSpec::new(sigma, theta0.clone(), 0.5, diag_spec).unwrap();
        for k in LimitKind::ALL {
            let eta = limit_eta(k, &diag, &cfg).unwrap();
            for (e, t) in eta.iter().zip(theta0.iter()) {
                assert_relative_eq!(*e, t * t, max_relative = 1e-6);
            }
        }
    }

    #[test]
    fn w_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 4;
        let b = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let sigma = &b * b.transpose() + DMatrix::identity(n, n);
        let theta0 = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let ls = LimitSpec::new(sigma, theta0, 0.7, ridge_spec(n)).unwrap();
        let c = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
        // deliberately nonsymmetric
        let p = &c * c.transpose() + DMatrix::identity(n, n) + DMatrix::from_fn(n, n, |i, j| if i < j { 0.1 } else { 0.0 });
        for kind in LimitKind::ALL {
            let g = w_grad_p(kind, &p, &ls).unwrap();
            for i in 0..n {
                for j in 0..n {
                    let h = 1e-6;
                    let mut a = p.clone();
                    a[(i, j)] += h;
                    let mut m = p.clone();
                    m[(i, j)] -= h;
                    let fd = (w_value(kind, &a, &ls).unwrap() - w_value(kind, &m, &ls).unwrap()) / (2.0 * h);
                    assert_relative_eq!(g[(i, j)], fd, max_relative = 1e-5, epsilon = 1e-8);
                }
            }
        }
    }

    #[test]
    fn limit_eta_solves_the_stationarity_systems() {
        let n = 10;
        let theta0 = DVector::from_fn(n, |i, _| 0.7f64.powi(i as i32) * (1.0 + 0.3 * (i as f64).cos()));
        let spec = KernelSpec::new(KernelFamily::TunedCorrelated, vec![1.0, 0.5], n).unwrap();
        let sigma = crate::bench::input_covariance(crate::bench::InputKind::It4, n);
        let ls = LimitSpec::new(sigma, theta0, 0.3, spec).unwrap();
        let cfg = OptimizerConfig::default();
        for kind in LimitKind::ALL {
            let eta = limit_eta(kind, &ls, &cfg).unwrap();
            let r = stationarity_residuals(kind, &eta, &ls).unwrap();
            // residuals are the η-gradient of W up to the 2σ⁴ factor; the optimizer
            // stops on the log/logit-scaled gradient relative to 1 + |W|
            let p = kernel_matrix(&ls.family.with_eta(eta.clone())).unwrap();
            let scale = w_value(kind, &p, &ls).unwrap().abs() + 1.0;
            let factor = if kind == LimitKind::B { 1.0 } else { 2.0 * 0.3 * 0.3 };
            let search_scale = [eta[0], eta[1] * (1.0 - eta[1])];
            for i in 0..2 {
                assert!((r[i] * factor * search_scale[i]).abs() <= cfg.grad_tol * scale, "{kind}: residual {r:?} at {eta:?}");
            }
        }
    }

    #[test]
    fn shifted_eb_matches_stated_shift_and_dense_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let (big_n, n) = (60, 4);
        let phi = DMatrix::from_fn(big_n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let theta0 = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let y = &phi * &theta0 + DVector::from_fn(big_n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let d = Dataset::new(y.clone(), phi.clone()).unwrap();
        let p = DMatrix::from_fn(n, n, |i, j| 0.8f64.powi(i.max(j) as i32));
        let sigma2 = 0.9;
        let gram = phi.tr_mul(&phi);
        let gram_inv = gram.clone().try_inverse().unwrap();
        let b = phi.tr_mul(&y);
        let expected = criterion_value(CriterionKind::Eb, &p, &d, sigma2, None).unwrap() + b.dot(&(&gram_inv * &b)) / sigma2
            - y.norm_squared() / sigma2
            - (big_n - n) as f64 * sigma2.ln()
            - gram.determinant().ln();
        assert_relative_eq!(shifted_criterion(CriterionKind::Eb, &p, &d, sigma2, None).unwrap(), expected, max_relative = 1e-10);

        // σ⁴Q⁻ᵀ(I − Φ(ΦᵀΦ)⁻¹Φᵀ)Q⁻¹ = I − Φ(ΦᵀΦ)⁻¹Φᵀ, with P nonsymmetric too
        let mut pn = p.clone();
        pn[(0, 1)] += 0.05;
        for p in [&p, &pn] {
            let q_inv = dense::q_matrix(p, &phi, sigma2).try_inverse().unwrap();
            let proj = DMatrix::identity(big_n, big_n) - &phi * &gram_inv * phi.transpose();
            let lhs = q_inv.transpose() * &proj * &q_inv * (sigma2 * sigma2);
            assert!((lhs - &proj).amax() < 1e-10);
        }
    }

    #[test]
    fn shifted_criteria_approach_their_limits() {
        // white input: ΦᵀΦ/N → I; P fixed and invertible
        let n = 5;
        let theta0 = DVector::from_fn(n, |i, _| 0.6f64.powi(i as i32));
        let spec = KernelSpec::new(KernelFamily::TunedCorrelated, vec![0.5, 0.6], n).unwrap();
        let p = kernel_matrix(&spec).unwrap();
        let ls = LimitSpec::new(DMatrix::identity(n, n), theta0.clone(), 0.25, spec).unwrap();
        let grid = [500usize, 2000, 8000];
        for kind in CriterionKind::ALL {
            let w = w_value(LimitKind::of(kind), &p, &ls).unwrap();
            let mut medians = vec![];
            for (gi, &big_n) in grid.iter().enumerate() {
                let mut gaps: Vec<f64> = (0..20)
                    .map(|r| {
                        let d = rates::simulate(&ls, crate::bench::InputKind::It2, big_n, 77, (gi * 100 + r) as u64).unwrap();
                        let truth = kind.is_oracle().then_some(&theta0);
                        (shifted_criterion(kind, &p, &d, 0.25, truth).unwrap() - w).abs()
                    })
                    .collect();
                gaps.sort_by(f64::total_cmp);
                medians.push(0.5 * (gaps[9] + gaps[10]));
            }
            assert!(medians[0] > medians[1] && medians[1] > medians[2], "{kind}: {medians:?}");
        }
    }

    #[test]
    fn scaled_gradients_approach_their_limits() {
        let n = 5;
        let theta0 = DVector::from_fn(n, |i, _| 0.6f64.powi(i as i32));
        let spec = KernelSpec::new(KernelFamily::TunedCorrelated, vec![0.5, 0.6], n).unwrap();
        let p = kernel_matrix(&spec).unwrap();
        let ls = LimitSpec::new(DMatrix::identity(n, n), theta0.clone(), 0.25, spec).unwrap();
        let grid = [500usize, 2000, 8000];
        for kind in CriterionKind::ALL {
            let limit = w_grad_p(LimitKind::of(kind), &p, &ls).unwrap();
            let mut medians = vec![];
            for (gi, &big_n) in grid.iter().enumerate() {
                let mut gaps: Vec<f64> = (0..20)
                    .map(|r| {
                        let d = rates::simulate(&ls, crate::bench::InputKind::It2, big_n, 78, (gi * 100 + r) as u64).unwrap();
                        let truth = kind.is_oracle().then_some(&theta0);
                        let g = criterion_grad_p(kind, &p, &d, 0.25, truth).unwrap();
                        let scale = (big_n as f64).powi(limit_scaling(kind));
                        (g * scale - &limit).norm()
                    })
                    .collect();
                gaps.sort_by(f64::total_cmp);
                medians.push(0.5 * (gaps[9] + gaps[10]));
            }
            assert!(medians[0] > medians[1] && medians[1] > medians[2], "{kind}: {medians:?}");
        }
    }

    #[test]
    fn singular_kernel_is_rejected() {
        let ls = diag_ls();
        let p = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(matches!(w_g(&p, &ls), Err(Error::Singular(_))));
        assert!(matches!(w_b(&p, ls.theta0()), Err(Error::Singular(_))));
    }
}
