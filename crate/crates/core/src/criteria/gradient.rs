use nalgebra::{DMatrix, DVector};

use super::derived::{DataMoments, DerivedQuantities};
use super::value::{check_kernel, CriterionEvaluator};
use super::CriterionKind;
use crate::error::{Error, Result};
use crate::kernels::{kernel_gradients, kernel_matrix, KernelSpec};
use crate::linalg;
use crate::model::Dataset;
use crate::scalar::Real;

/// Derivative with respect to the entries of `P`, written with `H`-forms.
/// With `C = ΦᵀQ⁻ᵀΦ = H⁻ᵀΦᵀΦ`, `v = ΦᵀQ⁻¹Y` and `w = ΦᵀQ⁻ᵀY`:
///
/// * EB: `C − wvᵀ`
/// * SUREy: `2σ⁴(H⁻ᵀC − H⁻ᵀvvᵀ)`
/// * SUREg: `2σ⁴(H⁻ᵀH̄⁻ᵀ − H⁻ᵀ(ΦᵀΦ)⁻¹vvᵀ)`
/// * MSEg: `2σ⁴H⁻ᵀH⁻¹(P − θ₀θ₀ᵀ)C`
/// * MSEy: `2σ⁴H⁻ᵀΦᵀΦH⁻¹(P − θ₀θ₀ᵀ)C`
/// * EEB: `C(Pᵀ − θ₀θ₀ᵀ)C`
pub(super) fn grad_p<T: Real>(
    kind: CriterionKind,
    dq: &DerivedQuantities<'_, T>,
    theta0: Option<&DVector<T>>,
) -> Result<DMatrix<T>> {
    let sigma2 = dq.sigma2();
    let two_sigma4 = sigma2 * sigma2 * T::lit(2.0);
    let gram = dq.gram();
    let h_inv = dq.h_inv();
    let h_inv_t = h_inv.transpose();
    let ct = &h_inv_t * gram;
    let v = dq.phi_t_qinv_y();
    let truth = || theta0.ok_or(Error::MissingTruth(kind.name()));
    let g = match kind {
        CriterionKind::Eb => {
            let w = dq.phi_t_qinv_t_y();
            ct - w * v.transpose()
        }
        CriterionKind::SureY => {
            let hv = &h_inv_t * v;
            (&h_inv_t * &ct - hv * v.transpose()) * two_sigma4
        }
        CriterionKind::SureG => {
            let gram_inv = dq.moments().gram_inv()?;
            let u = &h_inv_t * (gram_inv * v);
            (&h_inv_t * dq.hbar_inv()?.transpose() - u * v.transpose()) * two_sigma4
        }
        CriterionKind::MseG => {
            let theta0 = truth()?;
            let core = dq.p() - theta0 * theta0.transpose();
            &h_inv_t * (h_inv * core) * &ct * two_sigma4
        }
        CriterionKind::MseY => {
            let theta0 = truth()?;
            let core = dq.p() - theta0 * theta0.transpose();
            &h_inv_t * gram * (h_inv * core) * &ct * two_sigma4
        }
        CriterionKind::Eeb => {
            let theta0 = truth()?;
            let core = dq.p().transpose() - theta0 * theta0.transpose();
            &ct * core * &ct
        }
    };
    Ok(g)
}

/// The same derivatives rewritten through `S = P + σ²(ΦᵀΦ)⁻¹`.
pub(super) fn grad_p_rewritten<T: Real>(
    kind: CriterionKind,
    dq: &DerivedQuantities<'_, T>,
    theta0: Option<&DVector<T>>,
) -> Result<DMatrix<T>> {
    let sigma2 = dq.sigma2();
    let two_sigma4 = sigma2 * sigma2 * T::lit(2.0);
    let m = dq.moments();
    let gram_inv = m.gram_inv()?;
    let s = dq.s()?;
    let s_inv = dq.s_inv()?;
    let s_inv_t = s_inv.transpose();
    let truth = || theta0.ok_or(Error::MissingTruth(kind.name()));
    let outer = |x: &DVector<T>| x * x.transpose();
    let g = match kind {
        CriterionKind::MseG | CriterionKind::MseY => {
            let theta0 = truth()?;
            let weight = if kind == CriterionKind::MseG { gram_inv * gram_inv } else { gram_inv.clone() };
            &s_inv_t * weight * s_inv * (dq.p() - outer(theta0)) * &s_inv_t * two_sigma4
        }
        CriterionKind::SureG | CriterionKind::SureY => {
            let theta_ls = m.theta_ls()?;
            let weight = if kind == CriterionKind::SureG { gram_inv * gram_inv } else { gram_inv.clone() };
            &s_inv_t * weight * s_inv * (&s - outer(theta_ls)) * &s_inv_t * two_sigma4
        }
        CriterionKind::Eeb => {
            let theta0 = truth()?;
            &s_inv_t * (dq.p().transpose() - outer(theta0)) * &s_inv_t
        }
        CriterionKind::Eb => {
            let theta_ls = m.theta_ls()?;
            &s_inv_t * (s.transpose() - outer(theta_ls)) * &s_inv_t
        }
    };
    Ok(g)
}

/// Unsymmetrized derivative of the criterion with respect to the entries of `P`.
pub fn criterion_grad_p<T: Real>(
    kind: CriterionKind,
    p: &DMatrix<T>,
    d: &Dataset<T>,
    sigma2: T,
    theta0: Option<&DVector<T>>,
) -> Result<DMatrix<T>> {
    let moments = DataMoments::from_dataset(d);
    let eval = CriterionEvaluator::new(kind, &moments, sigma2, theta0)?;
    check_kernel(p, moments.n_params())?;
    let dq = eval.derived(p.clone())?;
    grad_p(kind, &dq, eval.theta0())
}

/// Derivative with respect to `P` in the `S`-based form. Needs an invertible `ΦᵀΦ`.
pub fn criterion_grad_p_rewritten<T: Real>(
    kind: CriterionKind,
    p: &DMatrix<T>,
    d: &Dataset<T>,
    sigma2: T,
    theta0: Option<&DVector<T>>,
) -> Result<DMatrix<T>> {
    let moments = DataMoments::from_dataset(d);
    let eval = CriterionEvaluator::new(kind, &moments, sigma2, theta0)?;
    check_kernel(p, moments.n_params())?;
    moments.gram_inv()?;
    let dq = eval.derived(p.clone())?;
    grad_p_rewritten(kind, &dq, eval.theta0())
}

/// Chain rule `∂F/∂η_i = Tr(∂F/∂P · (∂P/∂η_i)ᵀ)`.
pub fn grad_eta_from_grad_p<T: Real>(grad_p: &DMatrix<T>, dp: &[DMatrix<T>]) -> DVector<T> {
    DVector::from_iterator(dp.len(), dp.iter().map(|d| linalg::frobenius_inner(grad_p, d)))
}

/// Gradient of `η ↦ F(P(η))`.
pub fn criterion_grad_eta<T: Real>(
    kind: CriterionKind,
    spec: &KernelSpec<T>,
    d: &Dataset<T>,
    sigma2: T,
    theta0: Option<&DVector<T>>,
) -> Result<DVector<T>> {
    let p = kernel_matrix(spec)?;
    let gp = criterion_grad_p(kind, &p, d, sigma2, theta0)?;
    Ok(grad_eta_from_grad_p(&gp, &kernel_gradients(spec)?))
}
