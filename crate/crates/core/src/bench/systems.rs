//! Random stable test systems.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Largest allowed pole modulus.
pub const MAX_SPECTRAL_RADIUS: f64 = 0.95;
/// Smallest spectral radius a drawn system is rescaled to.
pub const MIN_SPECTRAL_RADIUS: f64 = 0.6;

/// State-space test system `x⁺ = Ax + Bu, y = Cx` and its truncated,
/// unit-norm impulse response.
#[derive(Debug, Clone, PartialEq)]
pub struct TestSystem {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub c: DVector<f64>,
    pub spectral_radius: f64,
    /// `g_k = C Aᵏ⁻¹ B / ‖g‖` for `k = 1..=fir_n`.
    pub theta0: DVector<f64>,
}

pub fn spectral_radius(a: &DMatrix<f64>) -> f64 {
    a.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Draws Gaussian `A`, `B`, `C` and rescales `A` to a spectral radius drawn
/// uniformly from `[MIN_SPECTRAL_RADIUS, MAX_SPECTRAL_RADIUS]`. Draws with
/// a vanishing impulse response are rejected and redrawn.
pub fn generate_test_system(order: usize, fir_n: usize, seed: u64) -> Result<TestSystem> {
    generate_test_system_with(order, fir_n, &mut ChaCha8Rng::seed_from_u64(seed))
}

pub fn generate_test_system_with<R: Rng + ?Sized>(order: usize, fir_n: usize, rng: &mut R) -> Result<TestSystem> {
    if order == 0 || fir_n == 0 {
        return Err(Error::Dimension("system order and FIR length must be at least 1".into()));
    }
    for _ in 0..1000 {
        let mut a = DMatrix::from_fn(order, order, |_, _| rng.sample::<f64, _>(StandardNormal));
        let b = DVector::from_fn(order, |_, _| rng.sample::<f64, _>(StandardNormal));
        let c = DVector::from_fn(order, |_, _| rng.sample::<f64, _>(StandardNormal));
        let target = rng.random_range(MIN_SPECTRAL_RADIUS..=MAX_SPECTRAL_RADIUS);
        let rho = spectral_radius(&a);
        if !(rho > 0.0 && rho.is_finite()) {
            continue;
        }
        a *= target / rho;
        let rho = spectral_radius(&a);
        if rho > MAX_SPECTRAL_RADIUS * (1.0 + 1e-12) {
            continue;
        }
        let mut g = DVector::zeros(fir_n);
        let mut x = b.clone();
        for k in 0..fir_n {
            g[k] = c.dot(&x);
            x = &a * x;
        }
        let norm = g.norm();
        if !(norm > 1e-12) || g.iter().all(|v| *v == g[0]) {
            continue;
        }
        g /= norm;
        return Ok(TestSystem { a, b, c, spectral_radius: rho, theta0: g });
    }
    Err(Error::InvalidArgument("could not draw a stable test system".into()))
}
