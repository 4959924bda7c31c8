use nalgebra::{DMatrix, DVector};

use super::derived::{DataMoments, DerivedQuantities};
use super::gradient;
use super::CriterionKind;
use crate::error::{Error, Result};
use crate::linalg::{self, LuFactor};
use crate::model::{check_sigma2, Dataset};
use crate::scalar::Real;

/// A criterion bound to one dataset, noise variance and (for oracle kinds) truth.
#[derive(Clone, Copy)]
pub struct CriterionEvaluator<'a, T: Real> {
    kind: CriterionKind,
    moments: &'a DataMoments<T>,
    sigma2: T,
    theta0: Option<&'a DVector<T>>,
}

impl<'a, T: Real> CriterionEvaluator<'a, T> {
    /// Rejects a missing `θ₀` for oracle kinds and, for SUREg, an
    /// ill-conditioned `ΦᵀΦ`.
    pub fn new(
        kind: CriterionKind,
        moments: &'a DataMoments<T>,
        sigma2: T,
        theta0: Option<&'a DVector<T>>,
    ) -> Result<Self> {
        check_sigma2(sigma2)?;
        let theta0 = if kind.is_oracle() {
            let t = theta0.ok_or(Error::MissingTruth(kind.name()))?;
            if t.len() != moments.n_params() {
                return Err(Error::Dimension(format!(
                    "theta0 has {} entries, expected {}",
                    t.len(),
                    moments.n_params()
                )));
            }
            Some(t)
        } else {
            None
        };
        if kind == CriterionKind::SureG {
            moments.gram_inv()?;
        }
        Ok(Self { kind, moments, sigma2, theta0 })
    }

    pub fn kind(&self) -> CriterionKind {
        self.kind
    }

    pub fn moments(&self) -> &'a DataMoments<T> {
        self.moments
    }

    pub fn sigma2(&self) -> T {
        self.sigma2
    }

    pub fn theta0(&self) -> Option<&'a DVector<T>> {
        self.theta0
    }

    /// Derived quantities at `p`. `p` is trusted to be positive semidefinite.
    pub fn derived(&self, p: DMatrix<T>) -> Result<DerivedQuantities<'a, T>> {
        DerivedQuantities::new(self.moments, p, self.sigma2)
    }

    pub fn value(&self, p: DMatrix<T>) -> Result<T> {
        self.value_at(&self.derived(p)?)
    }

    pub fn value_and_grad_p(&self, p: DMatrix<T>) -> Result<(T, DMatrix<T>)> {
        let dq = self.derived(p)?;
        Ok((self.value_at(&dq)?, self.grad_p_at(&dq)?))
    }

    pub fn grad_p_at(&self, dq: &DerivedQuantities<'_, T>) -> Result<DMatrix<T>> {
        gradient::grad_p(self.kind, dq, self.theta0)
    }

    pub fn value_at(&self, dq: &DerivedQuantities<'_, T>) -> Result<T> {
        let sigma2 = self.sigma2;
        let m = self.moments;
        let gram = m.gram();
        let b = m.phi_t_y();
        let n = T::from_usize_lossy(m.n_params());
        let big_n = T::from_usize_lossy(m.n_samples());
        let theta_r = dq.theta_r();
        let value = match self.kind {
            CriterionKind::Eb => (m.y_t_y() - b.dot(theta_r)) / sigma2 + dq.log_det_q(),
            CriterionKind::SureY => {
                let resid = m.y_t_y() - b.dot(theta_r) * T::lit(2.0) + theta_r.dot(&(gram * theta_r));
                resid + (n - dq.h_inv().trace() * sigma2) * sigma2 * T::lit(2.0)
            }
            CriterionKind::SureG => {
                let gap = m.theta_ls()? - theta_r;
                let r_inv_trace = dq.r_inv().trace();
                gap.norm_squared() + (r_inv_trace * T::lit(2.0) - m.gram_inv()?.trace()) * sigma2
            }
            CriterionKind::MseG => {
                let theta0 = self.truth()?;
                let a = dq.h_lu().solve(theta0);
                let k = dq.r_inv();
                let sigma4 = sigma2 * sigma2;
                a.norm_squared() * sigma4 + linalg::frobenius_inner(&(&k * gram), &k) * sigma2
            }
            CriterionKind::MseY => {
                let theta0 = self.truth()?;
                let a = dq.h_lu().solve(theta0);
                let k = dq.r_inv();
                let kg = &k * gram;
                let sigma4 = sigma2 * sigma2;
                // Tr(K G Kᵀ G) = ⟨KG, GK⟩ with G symmetric
                a.dot(&(gram * &a)) * sigma4
                    + big_n * sigma2
                    + linalg::frobenius_inner(&kg, &(gram * &k)) * sigma2
            }
            CriterionKind::Eeb => {
                let theta0 = self.truth()?;
                let a = dq.h_lu().solve(theta0);
                theta0.dot(&(gram * a)) + (big_n - n) + dq.h_inv().trace() * sigma2 + dq.log_det_q()
            }
        };
        Ok(value)
    }

    fn truth(&self) -> Result<&'a DVector<T>> {
        self.theta0.ok_or(Error::MissingTruth(self.kind.name()))
    }
}

/// Criterion value at kernel matrix `p`.
///
/// EB is `YᵀQ⁻¹Y + log det Q`, evaluated as
/// `(YᵀY − YᵀΦ H⁻¹PΦᵀY)/σ² + (N−n) log σ² + log det(PΦᵀΦ + σ²I)` without any
/// constant offset. SUREg keeps its `−σ²Tr((ΦᵀΦ)⁻¹)` term.
pub fn criterion_value<T: Real>(
    kind: CriterionKind,
    p: &DMatrix<T>,
    d: &Dataset<T>,
    sigma2: T,
    theta0: Option<&DVector<T>>,
) -> Result<T> {
    let moments = DataMoments::from_dataset(d);
    let eval = CriterionEvaluator::new(kind, &moments, sigma2, theta0)?;
    check_kernel(p, moments.n_params())?;
    eval.value(p.clone())
}

pub(super) fn check_kernel<T: Real>(p: &DMatrix<T>, n: usize) -> Result<()> {
    if p.shape() != (n, n) {
        return Err(Error::Dimension(format!(
            "kernel matrix is {}x{}, expected {n}x{n}",
            p.nrows(),
            p.ncols()
        )));
    }
    linalg::check_psd(p)
}

/// Residual of the kernel-independent relation between SUREy and SUREg:
///
/// `SUREy(P) = Tr([(θ̂ᴸˢ−θ̂ᴿ)(θ̂ᴸˢ−θ̂ᴿ)ᵀ + σ²(2R⁻¹ − (ΦᵀΦ)⁻¹)]ΦᵀΦ) + YᵀY − YᵀΦ(ΦᵀΦ)⁻¹ΦᵀY + nσ²`.
///
/// `R = ΦᵀΦ + σ²P⁻¹` is formed from `P⁻¹` directly. Returns `Ok(None)` when
/// `P` is singular and `R` does not exist.
pub fn surey_sureg_relation_check<T: Real>(
    p: &DMatrix<T>,
    d: &Dataset<T>,
    sigma2: T,
) -> Result<Option<T>> {
    let moments = DataMoments::from_dataset(d);
    check_kernel(p, moments.n_params())?;
    let gram_inv = moments.gram_inv()?;
    let theta_ls = moments.theta_ls()?;
    let eval = CriterionEvaluator::new(CriterionKind::SureY, &moments, sigma2, None)?;
    let dq = eval.derived(p.clone())?;
    let f_sy = eval.value_at(&dq)?;
    let Some(r) = dq.r() else {
        return Ok(None);
    };
    let Ok(r_lu) = LuFactor::new(r, "ΦᵀΦ + σ²P⁻¹") else {
        return Ok(None);
    };
    let gram = moments.gram();
    let gap = theta_ls - dq.theta_r();
    let inner = &gap * gap.transpose() + (r_lu.inverse() * T::lit(2.0) - gram_inv) * sigma2;
    let b = moments.phi_t_y();
    let n = T::from_usize_lossy(moments.n_params());
    let constant = moments.y_t_y() - b.dot(theta_ls) + n * sigma2;
    let rhs = linalg::trace_of_product(&inner, gram) + constant;
    Ok(Some((f_sy - rhs).abs()))
}
