//! Reference evaluation of the criteria with the `N×N` matrix
//! `Q = ΦPΦᵀ + σ²I` formed explicitly. `O(N³)`; meant for checking the fast
//! path on small problems.

use nalgebra::{DMatrix, DVector};

use super::CriterionKind;
use crate::error::{Error, Result};
use crate::linalg::LuFactor;
use crate::model::Dataset;
use crate::scalar::Real;

pub fn q_matrix<T: Real>(p: &DMatrix<T>, phi: &DMatrix<T>, sigma2: T) -> DMatrix<T> {
    let mut q = phi * p * phi.transpose();
    for i in 0..q.nrows() {
        q[(i, i)] += sigma2;
    }
    q
}

pub fn criterion_value_dense<T: Real>(
    kind: CriterionKind,
    p: &DMatrix<T>,
    d: &Dataset<T>,
    sigma2: T,
    theta0: Option<&DVector<T>>,
) -> Result<T> {
    let phi = d.phi();
    let y = d.y();
    let big_n = phi.nrows();
    let q_lu = LuFactor::new(q_matrix(p, phi, sigma2), "Q")?;
    let q_inv = q_lu.inverse();
    // L = PΦᵀQ⁻¹ maps Y to the RLS estimate.
    let l = p * phi.transpose() * &q_inv;
    let theta_r = &l * y;
    let truth = || theta0.ok_or(Error::MissingTruth(kind.name()));
    let identity = DMatrix::<T>::identity(p.nrows(), p.nrows());
    let value = match kind {
        CriterionKind::Eb => y.dot(&(&q_inv * y)) + q_lu.log_abs_det().0,
        CriterionKind::SureY => {
            let hat = phi * &l;
            (y - phi * &theta_r).norm_squared() + hat.trace() * sigma2 * T::lit(2.0)
        }
        CriterionKind::SureG => {
            let gram_inv = LuFactor::new(phi.transpose() * phi, "ΦᵀΦ")?.inverse();
            let theta_ls = &gram_inv * (phi.transpose() * y);
            let r_inv = &l * phi * &gram_inv;
            (theta_ls - &theta_r).norm_squared()
                + (r_inv.trace() * T::lit(2.0) - gram_inv.trace()) * sigma2
        }
        CriterionKind::MseG => {
            let theta0 = truth()?;
            ((&l * phi - &identity) * theta0).norm_squared() + l.norm_squared() * sigma2
        }
        CriterionKind::MseY => {
            let theta0 = truth()?;
            (phi * ((&l * phi - &identity) * theta0)).norm_squared()
                + T::from_usize_lossy(big_n) * sigma2
                + (phi * &l).norm_squared() * sigma2
        }
        CriterionKind::Eeb => {
            let theta0 = truth()?;
            let x = phi * theta0;
            x.dot(&(&q_inv * &x)) + q_inv.trace() * sigma2 + q_lu.log_abs_det().0
        }
    };
    Ok(value)
}
