use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{self, LuFactor, CONDITION_THRESHOLD};
use crate::model::{check_sigma2, regularized_gain, Dataset};
use crate::scalar::Real;

/// Sufficient statistics `ΦᵀΦ`, `ΦᵀY`, `YᵀY` and `N` of a dataset.
///
/// Computing them is the only `O(N n²)` step; every criterion evaluation
/// afterwards costs `O(n³)`. The condition number and `(ΦᵀΦ)⁻¹` are computed
/// on first use and cached.
#[derive(Debug)]
pub struct DataMoments<T: Real> {
    gram: DMatrix<T>,
    phi_t_y: DVector<T>,
    y_t_y: T,
    n_samples: usize,
    condition: OnceLock<f64>,
    inverse: OnceLock<std::result::Result<GramInverse<T>, f64>>,
}

#[derive(Debug)]
struct GramInverse<T: Real> {
    inv: DMatrix<T>,
    theta_ls: DVector<T>,
    log_det: T,
}

impl<T: Real> DataMoments<T> {
    pub fn from_dataset(d: &Dataset<T>) -> Self {
        let phi = d.phi();
        // The transposed product goes through the blocked matrix kernel.
        let phi_t = phi.transpose();
        let gram = &phi_t * phi;
        let phi_t_y = &phi_t * d.y();
        Self::from_parts(gram, phi_t_y, d.y().norm_squared(), d.n_samples())
            .expect("dataset shapes are validated")
    }

    /// Moments from precomputed pieces. `gram` is symmetrized.
    pub fn from_parts(gram: DMatrix<T>, phi_t_y: DVector<T>, y_t_y: T, n_samples: usize) -> Result<Self> {
        let n = gram.nrows();
        if gram.ncols() != n || phi_t_y.len() != n || n == 0 {
            return Err(Error::Dimension(format!(
                "moments: gram is {}x{}, phi_t_y has {} entries",
                gram.nrows(),
                gram.ncols(),
                phi_t_y.len()
            )));
        }
        if n_samples < n {
            return Err(Error::Dimension(format!("N = {n_samples} is smaller than n = {n}")));
        }
        Ok(Self {
            gram: linalg::symmetric_part(&gram),
            phi_t_y,
            y_t_y,
            n_samples,
            condition: OnceLock::new(),
            inverse: OnceLock::new(),
        })
    }

    pub fn gram(&self) -> &DMatrix<T> {
        &self.gram
    }

    pub fn phi_t_y(&self) -> &DVector<T> {
        &self.phi_t_y
    }

    pub fn y_t_y(&self) -> T {
        self.y_t_y
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn n_params(&self) -> usize {
        self.gram.nrows()
    }

    /// Spectral condition number of `ΦᵀΦ` (infinite when not positive definite).
    pub fn condition(&self) -> f64 {
        *self.condition.get_or_init(|| linalg::spd_condition(&self.gram))
    }

    fn inverse(&self) -> Result<&GramInverse<T>> {
        let cached = self.inverse.get_or_init(|| {
            let cond = self.condition();
            let chol = linalg::conditioned_cholesky(&self.gram, cond).map_err(|_| cond)?;
            let log_det = chol
                .l_dirty()
                .diagonal()
                .iter()
                .fold(T::zero(), |acc, d| acc + d.ln())
                * T::lit(2.0);
            Ok(GramInverse {
                theta_ls: chol.solve(&self.phi_t_y),
                inv: chol.inverse(),
                log_det,
            })
        });
        cached.as_ref().map_err(|&cond| Error::IllConditioned {
            cond,
            threshold: CONDITION_THRESHOLD,
        })
    }

    /// `(ΦᵀΦ)⁻¹`, refused above the condition threshold.
    pub fn gram_inv(&self) -> Result<&DMatrix<T>> {
        Ok(&self.inverse()?.inv)
    }

    pub fn theta_ls(&self) -> Result<&DVector<T>> {
        Ok(&self.inverse()?.theta_ls)
    }

    pub fn log_det_gram(&self) -> Result<T> {
        Ok(self.inverse()?.log_det)
    }
}

/// `H`, `H̄`, `S`, `R` and the vectors shared by criteria and gradients at one
/// kernel matrix.
///
/// `H = PΦᵀΦ + σ²I` is always factorized. Explicit inverses, `S` and `R` are
/// built on demand.
pub struct DerivedQuantities<'a, T: Real> {
    moments: &'a DataMoments<T>,
    p: DMatrix<T>,
    sigma2: T,
    h: DMatrix<T>,
    h_lu: LuFactor<T>,
    theta_r: DVector<T>,
    v: OnceLock<DVector<T>>,
    h_inv: OnceLock<DMatrix<T>>,
    hbar_inv: OnceLock<DMatrix<T>>,
    s_inv: OnceLock<Option<DMatrix<T>>>,
}

impl<'a, T: Real> DerivedQuantities<'a, T> {
    /// No positive-semidefiniteness check is made here; public criterion
    /// entry points do it.
    pub fn new(moments: &'a DataMoments<T>, p: DMatrix<T>, sigma2: T) -> Result<Self> {
        let n = moments.n_params();
        if p.shape() != (n, n) {
            return Err(Error::Dimension(format!(
                "kernel matrix is {}x{}, expected {n}x{n}",
                p.nrows(),
                p.ncols()
            )));
        }
        if p.iter().any(|x| !x.is_finite_value()) {
            return Err(Error::InvalidArgument("kernel matrix has non-finite entries".into()));
        }
        check_sigma2(sigma2)?;
        let h = regularized_gain(&p, moments.gram(), sigma2);
        let h_lu = LuFactor::new(h.clone(), "P ΦᵀΦ + σ²I")?;
        let theta_r = h_lu.solve(&(&p * moments.phi_t_y()));
        Ok(Self {
            moments,
            p,
            sigma2,
            h,
            h_lu,
            theta_r,
            v: OnceLock::new(),
            h_inv: OnceLock::new(),
            hbar_inv: OnceLock::new(),
            s_inv: OnceLock::new(),
        })
    }

    pub fn moments(&self) -> &DataMoments<T> {
        self.moments
    }

    pub fn p(&self) -> &DMatrix<T> {
        &self.p
    }

    pub fn sigma2(&self) -> T {
        self.sigma2
    }

    pub fn gram(&self) -> &DMatrix<T> {
        self.moments.gram()
    }

    pub fn phi_t_y(&self) -> &DVector<T> {
        self.moments.phi_t_y()
    }

    pub fn y_t_y(&self) -> T {
        self.moments.y_t_y()
    }

    /// `H = PΦᵀΦ + σ²I`.
    pub fn h(&self) -> &DMatrix<T> {
        &self.h
    }

    /// `H̄ = ΦᵀΦP + σ²I`.
    pub fn hbar(&self) -> DMatrix<T> {
        regularized_gain(self.gram(), &self.p, self.sigma2)
    }

    pub fn h_lu(&self) -> &LuFactor<T> {
        &self.h_lu
    }

    pub fn h_inv(&self) -> &DMatrix<T> {
        self.h_inv.get_or_init(|| self.h_lu.inverse())
    }

    /// `H̄⁻¹`; equals `H⁻ᵀ` whenever `P` is exactly symmetric.
    pub fn hbar_inv(&self) -> Result<&DMatrix<T>> {
        if let Some(m) = self.hbar_inv.get() {
            return Ok(m);
        }
        let m = if linalg::is_exactly_symmetric(&self.p) {
            self.h_inv().transpose()
        } else {
            LuFactor::new(self.hbar(), "ΦᵀΦ P + σ²I")?.inverse()
        };
        Ok(self.hbar_inv.get_or_init(|| m))
    }

    pub fn log_det_h(&self) -> T {
        self.h_lu.log_abs_det().0
    }

    /// `log det Q = (N − n) log σ² + log det H`.
    pub fn log_det_q(&self) -> T {
        let extra = T::from_usize_lossy(self.moments.n_samples() - self.moments.n_params());
        extra * self.sigma2.ln() + self.log_det_h()
    }

    /// RLS estimate `θ̂ᴿ = H⁻¹PΦᵀY`.
    pub fn theta_r(&self) -> &DVector<T> {
        &self.theta_r
    }

    /// `ΦᵀQ⁻¹Y = H̄⁻¹ΦᵀY`. The residual form `(ΦᵀY − ΦᵀΦθ̂ᴿ)/σ²` cancels
    /// badly at high SNR and is only a fallback.
    pub fn phi_t_qinv_y(&self) -> &DVector<T> {
        self.v.get_or_init(|| match self.hbar_inv() {
            Ok(m) => m * self.phi_t_y(),
            Err(_) => (self.phi_t_y() - self.gram() * &self.theta_r) / self.sigma2,
        })
    }

    /// `ΦᵀQ⁻ᵀY = H⁻ᵀΦᵀY`.
    pub fn phi_t_qinv_t_y(&self) -> DVector<T> {
        self.h_inv().tr_mul(self.phi_t_y())
    }

    /// `ΦᵀQ⁻ᵀΦ = H⁻ᵀΦᵀΦ` (which is `S⁻ᵀ`).
    pub fn phi_t_qinv_t_phi(&self) -> DMatrix<T> {
        self.h_inv().tr_mul(self.gram())
    }

    /// `S = P + σ²(ΦᵀΦ)⁻¹`.
    pub fn s(&self) -> Result<DMatrix<T>> {
        Ok(&self.p + self.moments.gram_inv()? * self.sigma2)
    }

    /// `S⁻¹` by a direct factorization of `S`, independent of `H`.
    pub fn s_inv(&self) -> Result<&DMatrix<T>> {
        if let Some(cached) = self.s_inv.get() {
            return cached.as_ref().ok_or(Error::Singular("P + σ²(ΦᵀΦ)⁻¹"));
        }
        let s = self.s()?;
        let inv = LuFactor::new(s, "P + σ²(ΦᵀΦ)⁻¹").ok().map(|lu| lu.inverse());
        self.s_inv
            .get_or_init(|| inv)
            .as_ref()
            .ok_or(Error::Singular("P + σ²(ΦᵀΦ)⁻¹"))
    }

    /// `R = ΦᵀΦ + σ²P⁻¹`, present only for invertible `P`.
    pub fn r(&self) -> Option<DMatrix<T>> {
        let p_lu = LuFactor::new(self.p.clone(), "P").ok()?;
        Some(self.gram() + p_lu.inverse() * self.sigma2)
    }

    /// `R⁻¹ = H⁻¹P`, which extends continuously to singular `P`.
    pub fn r_inv(&self) -> DMatrix<T> {
        self.h_lu.solve_matrix(&self.p)
    }
}
