//! Hyperparameter estimation by box-constrained minimization of a criterion,
//! plus the closed forms for ridge and diagonal kernels on orthonormal designs.

mod search;
mod transform;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::criteria::{grad_eta_from_grad_p, CriterionEvaluator, CriterionKind, DataMoments};
use crate::error::{Error, Result};
use crate::kernels::{kernel_gradients, kernel_matrix, Bound, CoordinateKind, KernelFamily, KernelSpec};
use crate::model::{check_sigma2, fit_metric, Dataset, EstimateReport, OptimizerDiagnostics};
use crate::scalar::Real;

pub use search::{minimize, LocalResult, Objective, SearchOutcome};
pub use transform::Transform;

/// Local search method.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Projected BFGS on analytic gradients.
    GradientQuasiNewton,
    /// Nelder–Mead, polished by the gradient method.
    SimplexSearch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub restarts: usize,
    pub max_iters: usize,
    pub grad_tol: f64,
    pub step_tol: f64,
    pub seed: u64,
    /// `None` picks the simplex for at most three hyperparameters and
    /// quasi-Newton otherwise.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub method: Option<Method>,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self { restarts: 8, max_iters: 500, grad_tol: 1e-8, step_tol: 1e-10, seed: 0, method: None }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.restarts == 0 {
            return Err(Error::InvalidArgument("restarts must be at least 1".into()));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidArgument("max_iters must be at least 1".into()));
        }
        if !(self.grad_tol > 0.0 && self.step_tol > 0.0) {
            return Err(Error::InvalidArgument("grad_tol and step_tol must be positive".into()));
        }
        Ok(())
    }
}

/// `η ↦ F(P(η))` for one criterion and kernel family.
pub struct KernelObjective<'a, T: Real> {
    evaluator: CriterionEvaluator<'a, T>,
    spec: KernelSpec<T>,
}

impl<'a, T: Real> KernelObjective<'a, T> {
    pub fn new(evaluator: CriterionEvaluator<'a, T>, spec: KernelSpec<T>) -> Result<Self> {
        spec.validate()?;
        if spec.n != evaluator.moments().n_params() {
            return Err(Error::Dimension(format!(
                "kernel order {} does not match {} regressors",
                spec.n,
                evaluator.moments().n_params()
            )));
        }
        Ok(Self { evaluator, spec })
    }

    fn kernel(&self, eta: &[T]) -> Result<(KernelSpec<T>, DMatrix<T>)> {
        let spec = self.spec.with_eta(eta.to_vec());
        let p = kernel_matrix(&spec)?;
        Ok((spec, p))
    }
}

impl<T: Real> Objective<T> for KernelObjective<'_, T> {
    fn bounds(&self) -> Vec<Bound<T>> {
        self.spec.omega()
    }

    fn coordinate_kinds(&self) -> Vec<CoordinateKind> {
        self.spec.family.coordinate_kinds(self.spec.n)
    }

    fn value(&self, eta: &[T]) -> Result<T> {
        self.evaluator.value(self.kernel(eta)?.1)
    }

    fn value_grad(&self, eta: &[T]) -> Result<(T, Vec<T>)> {
        let (spec, p) = self.kernel(eta)?;
        let dq = self.evaluator.derived(p)?;
        let value = self.evaluator.value_at(&dq)?;
        let gp = self.evaluator.grad_p_at(&dq)?;
        Ok((value, chain_to_eta(&spec, &gp)?))
    }
}

/// Chain rule from `∂F/∂P` to `∂F/∂η`.
pub(crate) fn chain_to_eta<T: Real>(spec: &KernelSpec<T>, gp: &DMatrix<T>) -> Result<Vec<T>> {
    // ridge and diagonal derivatives are unit matrices; skip forming them
    Ok(match spec.family {
        KernelFamily::Ridge => vec![gp.trace()],
        KernelFamily::Diagonal => gp.diagonal().iter().copied().collect(),
        _ => grad_eta_from_grad_p(gp, &kernel_gradients(spec)?).iter().copied().collect(),
    })
}

/// Heuristic starting point from a reference impulse response: `c = ‖θ‖²/n`,
/// `α = 0.9`, `ρ = 0`, squared taps for the diagonal family, `c = 1` without
/// a reference. Clamped into the box.
pub fn heuristic_eta<T: Real>(spec: &KernelSpec<T>, theta: Option<&DVector<T>>) -> Vec<T> {
    let n = T::from_usize_lossy(spec.n);
    let c = theta.map(|t| t.norm_squared() / n).filter(|c| *c > T::zero()).unwrap_or(T::one());
    let eta = match spec.family {
        KernelFamily::StableSpline | KernelFamily::TunedCorrelated => vec![c, T::lit(0.9)],
        KernelFamily::DiagonalCorrelated => vec![c, T::lit(0.9), T::zero()],
        KernelFamily::Ridge => vec![c],
        KernelFamily::Diagonal => match theta {
            Some(t) => t.iter().map(|x| *x * *x).collect(),
            None => vec![T::one(); spec.n],
        },
    };
    eta.into_iter()
        .zip(spec.omega())
        .map(|(x, (lo, hi))| x.max(lo).min(hi))
        .collect()
}

/// [`heuristic_eta`] at the least-squares estimate, when it exists.
pub fn warm_start<T: Real>(spec: &KernelSpec<T>, moments: &DataMoments<T>) -> Vec<T> {
    heuristic_eta(spec, moments.theta_ls().ok())
}

/// Minimizes `kind` over the box of `spec` (its `eta` is ignored).
pub fn estimate_hyperparameter<T: Real>(
    kind: CriterionKind,
    spec: &KernelSpec<T>,
    d: &Dataset<T>,
    sigma2: T,
    theta0: Option<&DVector<T>>,
    cfg: &OptimizerConfig,
) -> Result<EstimateReport<T>> {
    let moments = DataMoments::from_dataset(d);
    estimate_with_moments(kind, spec, &moments, sigma2, theta0, cfg)
}

/// As [`estimate_hyperparameter`], sharing precomputed data moments.
pub fn estimate_with_moments<T: Real>(
    kind: CriterionKind,
    spec: &KernelSpec<T>,
    moments: &DataMoments<T>,
    sigma2: T,
    theta0: Option<&DVector<T>>,
    cfg: &OptimizerConfig,
) -> Result<EstimateReport<T>> {
    cfg.validate()?;
    if theta0.is_some() && !kind.is_oracle() {
        return Err(Error::InvalidArgument(format!(
            "{kind} is data-driven and takes no theta0; pass it only for fit reporting"
        )));
    }
    let evaluator = CriterionEvaluator::new(kind, moments, sigma2, theta0)?;
    let objective = KernelObjective::new(evaluator, spec.clone())?;
    let start = warm_start(spec, moments);
    let outcome = minimize(&objective, Some(&start), cfg)?;
    report(&objective, &outcome, theta0)
}

/// Like [`estimate_with_moments`] for a data-driven kind, with `θ₀` used
/// only to compute the fit.
pub fn estimate_with_fit<T: Real>(
    kind: CriterionKind,
    spec: &KernelSpec<T>,
    moments: &DataMoments<T>,
    sigma2: T,
    theta0: &DVector<T>,
    cfg: &OptimizerConfig,
) -> Result<EstimateReport<T>> {
    let truth = kind.is_oracle().then_some(theta0);
    let mut rep = estimate_with_moments(kind, spec, moments, sigma2, truth, cfg)?;
    let theta_hat = DVector::from_column_slice(&rep.theta_hat);
    rep.fit = fit_metric(&theta_hat, theta0).ok();
    Ok(rep)
}

/// Errors unless at least one local search converged.
pub fn require_convergence<T: Real>(outcome: &SearchOutcome<T>) -> Result<()> {
    if outcome.runs.iter().any(|r| r.converged) {
        return Ok(());
    }
    let w = outcome.winner();
    Err(Error::NonConvergence {
        restarts: outcome.runs.len(),
        best_value: w.value.as_f64(),
        best_eta: w.eta.iter().map(|x| x.as_f64()).collect(),
    })
}

fn report<T: Real>(
    objective: &KernelObjective<'_, T>,
    outcome: &SearchOutcome<T>,
    theta0: Option<&DVector<T>>,
) -> Result<EstimateReport<T>> {
    require_convergence(outcome)?;
    let w = outcome.winner();
    let (_, p) = objective.kernel(&w.eta)?;
    let dq = objective.evaluator.derived(p)?;
    let value = objective.evaluator.value_at(&dq)?;
    let theta_hat = dq.theta_r().clone();
    let fit = theta0.and_then(|t| fit_metric(&theta_hat, t).ok());
    Ok(EstimateReport {
        eta_hat: w.eta.clone(),
        criterion_kind: objective.evaluator.kind(),
        criterion_value: value,
        theta_hat: theta_hat.iter().copied().collect(),
        fit,
        optimizer_diagnostics: OptimizerDiagnostics {
            iterations: w.iterations,
            evaluations: outcome.runs.iter().map(|r| r.evaluations).sum(),
            restarts: outcome.runs.len(),
            converged: w.converged,
            boundary: outcome.boundary,
            gradient_norm: w.gradient_norm.as_f64(),
            winning_restart: outcome.best,
        },
    })
}

/// Ridge hyperparameter for `ΦᵀΦ = N·I`: `max(0, ‖θ̂ᴸˢ‖²/n − σ²/N)`.
pub fn closed_form_ridge<T: Real>(theta_ls: &DVector<T>, n: usize, big_n: usize, sigma2: T) -> T {
    let v = theta_ls.norm_squared() / T::from_usize_lossy(n) - sigma2 / T::from_usize_lossy(big_n);
    v.max(T::zero())
}

/// Diagonal hyperparameters for `ΦᵀΦ = N·I`: `max(0, ĝᵢ² − σ²/N)`.
pub fn closed_form_diagonal<T: Real>(theta_ls: &DVector<T>, big_n: usize, sigma2: T) -> DVector<T> {
    let shift = sigma2 / T::from_usize_lossy(big_n);
    theta_ls.map(|g| (g * g - shift).max(T::zero()))
}

/// `θ₀θ₀ᵀ`, the kernel minimizing the oracle criteria over all PSD matrices.
pub fn optimal_unconstrained_kernel<T: Real>(theta0: &DVector<T>) -> DMatrix<T> {
    theta0 * theta0.transpose()
}

/// Relative tolerance of the `ΦᵀΦ = N·I` check guarding the closed forms.
pub const ORTHONORMAL_TOLERANCE: f64 = 1e-8;

/// Whether `ΦᵀΦ` equals `N·I` within [`ORTHONORMAL_TOLERANCE`] relative.
pub fn is_scaled_orthonormal<T: Real>(moments: &DataMoments<T>) -> bool {
    let big_n = T::from_usize_lossy(moments.n_samples());
    let gram = moments.gram();
    let dev = (0..gram.nrows())
        .flat_map(|i| (0..gram.ncols()).map(move |j| (i, j)))
        .map(|(i, j)| {
            let target = if i == j { big_n } else { T::zero() };
            (gram[(i, j)] - target).abs()
        })
        .fold(T::zero(), |a, b| a.max(b));
    dev <= T::lit(ORTHONORMAL_TOLERANCE) * big_n
}

/// Closed-form estimate for ridge or diagonal kernels when `ΦᵀΦ = N·I`.
///
/// `Ok(None)` when the family has no closed form or the design fails the
/// orthonormality check; callers then fall back to [`estimate_hyperparameter`].
/// The result is clamped into the box of `spec`.
pub fn closed_form_estimate<T: Real>(
    kind: CriterionKind,
    spec: &KernelSpec<T>,
    moments: &DataMoments<T>,
    sigma2: T,
    theta0: Option<&DVector<T>>,
) -> Result<Option<Vec<T>>> {
    check_sigma2(sigma2)?;
    if !matches!(spec.family, KernelFamily::Ridge | KernelFamily::Diagonal) || !is_scaled_orthonormal(moments) {
        return Ok(None);
    }
    let n = moments.n_params();
    let big_n = moments.n_samples();
    let eta: Vec<T> = if kind.is_oracle() {
        let t = theta0.ok_or(Error::MissingTruth(kind.name()))?;
        match spec.family {
            KernelFamily::Ridge => vec![t.norm_squared() / T::from_usize_lossy(n)],
            _ => t.iter().map(|x| *x * *x).collect(),
        }
    } else {
        let ls = moments.theta_ls()?;
        match spec.family {
            KernelFamily::Ridge => vec![closed_form_ridge(ls, n, big_n, sigma2)],
            _ => closed_form_diagonal(ls, big_n, sigma2).iter().copied().collect(),
        }
    };
    Ok(Some(
        eta.into_iter().zip(spec.omega()).map(|(x, (lo, hi))| x.max(lo).min(hi)).collect(),
    ))
}
