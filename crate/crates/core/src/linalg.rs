//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector, SymmetricEigen, LU};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Relative condition-number ceiling for Gram matrices and kernel inverses.
pub const CONDITION_THRESHOLD: f64 = 1e12;

/// Relative tolerance on negative eigenvalues before a matrix stops counting as PSD.
pub const PSD_TOLERANCE: f64 = 1e-10;

pub fn max_abs<T: Real>(m: &DMatrix<T>) -> T {
    m.iter().fold(T::zero(), |acc, &x| acc.max(x.abs()))
}

pub fn symmetric_part<T: Real>(m: &DMatrix<T>) -> DMatrix<T> {
    (m + m.transpose()) * T::lit(0.5)
}

pub fn is_exactly_symmetric<T: Real>(m: &DMatrix<T>) -> bool {
    m.is_square() && (0..m.nrows()).all(|i| (0..i).all(|j| m[(i, j)] == m[(j, i)]))
}

/// Smallest eigenvalue of the symmetric part of `m`.
pub fn min_symmetric_eigenvalue<T: Real>(m: &DMatrix<T>) -> T {
    if m.nrows() == 0 {
        return T::zero();
    }
    SymmetricEigen::new(symmetric_part(m))
        .eigenvalues
        .iter()
        .fold(T::max_value().unwrap(), |acc, &x| acc.min(x))
}

/// Errors unless the smallest eigenvalue is at least `-PSD_TOLERANCE * max|m_ij|`.
pub fn check_psd<T: Real>(m: &DMatrix<T>) -> Result<()> {
    if !m.is_square() {
        return Err(Error::Dimension(format!(
            "kernel matrix must be square, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    if m.iter().any(|x| !x.is_finite_value()) {
        return Err(Error::InvalidKernel {
            min_eigenvalue: f64::NAN,
            norm: f64::NAN,
        });
    }
    let norm = max_abs(m);
    // A Cholesky factorization of the shifted symmetric part certifies the
    // bound cheaply; the eigenvalue route is only needed to reject.
    let mut shifted = symmetric_part(m);
    let shift = T::lit(PSD_TOLERANCE) * norm;
    for i in 0..shifted.nrows() {
        shifted[(i, i)] += shift;
    }
    if norm == T::zero() || shifted.cholesky().is_some() {
        return Ok(());
    }
    let min_eig = min_symmetric_eigenvalue(m);
    if min_eig < -T::lit(PSD_TOLERANCE) * norm {
        return Err(Error::InvalidKernel {
            min_eigenvalue: min_eig.as_f64(),
            norm: norm.as_f64(),
        });
    }
    Ok(())
}

/// Ratio of extreme eigenvalues of a symmetric matrix; infinite when not positive definite.
pub fn spd_condition<T: Real>(m: &DMatrix<T>) -> f64 {
    let eig = SymmetricEigen::new(symmetric_part(m)).eigenvalues;
    let (lo, hi) = eig
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
            (lo.min(x.as_f64()), hi.max(x.as_f64()))
        });
    if lo <= 0.0 || !lo.is_finite() {
        f64::INFINITY
    } else {
        hi / lo
    }
}

/// `Tr(A B)` without forming the product.
pub fn trace_of_product<T: Real>(a: &DMatrix<T>, b: &DMatrix<T>) -> T {
    debug_assert_eq!(a.ncols(), b.nrows());
    debug_assert_eq!(a.nrows(), b.ncols());
    let mut acc = T::zero();
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            acc += a[(i, j)] * b[(j, i)];
        }
    }
    acc
}

/// Frobenius inner product `Tr(A Bᵀ)`.
pub fn frobenius_inner<T: Real>(a: &DMatrix<T>, b: &DMatrix<T>) -> T {
    debug_assert_eq!(a.shape(), b.shape());
    a.iter().zip(b.iter()).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

/// Partial-pivoting LU of a general square matrix.
pub struct LuFactor<T: Real> {
    lu: LU<T, nalgebra::Dyn, nalgebra::Dyn>,
}

impl<T: Real> LuFactor<T> {
    pub fn new(m: DMatrix<T>, what: &'static str) -> Result<Self> {
        let lu = m.lu();
        if !lu.is_invertible() {
            return Err(Error::Singular(what));
        }
        let u = lu.u();
        if u.diagonal().iter().any(|d| !d.is_finite_value() || *d == T::zero()) {
            return Err(Error::Singular(what));
        }
        Ok(Self { lu })
    }

    pub fn solve(&self, b: &DVector<T>) -> DVector<T> {
        self.lu.solve(b).expect("invertibility checked at construction")
    }

    pub fn solve_matrix(&self, b: &DMatrix<T>) -> DMatrix<T> {
        self.lu.solve(b).expect("invertibility checked at construction")
    }

    pub fn inverse(&self) -> DMatrix<T> {
        self.lu
            .try_inverse()
            .expect("invertibility checked at construction")
    }

    /// `log|det|` together with the sign of the determinant.
    pub fn log_abs_det(&self) -> (T, T) {
        let u = self.lu.u();
        let mut log = T::zero();
        let mut sign = if self.lu.p().determinant::<T>() < T::zero() {
            -T::one()
        } else {
            T::one()
        };
        for d in u.diagonal().iter() {
            if *d < T::zero() {
                sign = -sign;
            }
            log += d.abs().ln();
        }
        (log, sign)
    }
}

/// Cholesky factor of an SPD matrix, rejected above [`CONDITION_THRESHOLD`].
pub fn conditioned_cholesky<T: Real>(
    m: &DMatrix<T>,
    cond: f64,
) -> Result<nalgebra::Cholesky<T, nalgebra::Dyn>> {
    if !(cond <= CONDITION_THRESHOLD) {
        return Err(Error::IllConditioned {
            cond,
            threshold: CONDITION_THRESHOLD,
        });
    }
    m.clone().cholesky().ok_or(Error::IllConditioned {
        cond,
        threshold: CONDITION_THRESHOLD,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn lu_log_det_tracks_sign() {
        let m = DMatrix::from_row_slice(2, 2, &[0.0, 2.0, 3.0, 0.0]);
        let lu = LuFactor::new(m, "test").unwrap();
        let (log, sign) = lu.log_abs_det();
        assert_relative_eq!(log, 6f64.ln(), epsilon = 1e-14);
        assert_eq!(sign, -1.0);
    }

    #[test]
    fn psd_check_rejects_indefinite() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(check_psd(&m), Err(Error::InvalidKernel { .. })));
        assert!(check_psd(&DMatrix::<f64>::identity(3, 3)).is_ok());
        assert!(check_psd(&DMatrix::<f64>::zeros(3, 3)).is_ok());
    }

    #[test]
    fn trace_helpers_agree_with_products() {
        let a = DMatrix::from_fn(3, 3, |i, j| (i * 3 + j) as f64 - 2.5);
        let b = DMatrix::from_fn(3, 3, |i, j| ((i + 1) * (j + 2)) as f64 * 0.1);
        assert_relative_eq!(trace_of_product(&a, &b), (&a * &b).trace(), epsilon = 1e-12);
        assert_relative_eq!(
            frobenius_inner(&a, &b),
            (&a * b.transpose()).trace(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn condition_of_singular_is_infinite() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(spd_condition(&m).is_infinite() || spd_condition(&m) > 1e15);
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 4.0]));
        assert_relative_eq!(spd_condition(&d), 4.0, epsilon = 1e-12);
    }
}
