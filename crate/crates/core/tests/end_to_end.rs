use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use regkern::asymptotics::w_b;
use regkern::criteria::criterion_value;
use regkern::hyperopt::{estimate_hyperparameter, OptimizerConfig};
use regkern::kernels::kernel_matrix;
use regkern::model::{fit_metric, rls_estimate};
use regkern::{CriterionKind, Dataset, KernelFamily, KernelSpec};

fn simulate(seed: u64, n: usize, big_n: usize, noise: f64) -> (Dataset<f64>, DVector<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let theta0 = DVector::from_fn(n, |k, _| 0.8f64.powi(k as i32) * (0.6 * k as f64).cos());
    let u: Vec<f64> = (0..big_n + n).map(|_| rng.sample(StandardNormal)).collect();
    let y: Vec<f64> = (0..big_n + n)
        .map(|t| {
            let clean: f64 = (0..n).filter(|k| t >= *k).map(|k| theta0[k] * u[t - k]).sum();
            clean + noise * rng.sample::<f64, _>(StandardNormal)
        })
        .collect();
    (Dataset::from_signals(&u, &y, n, true).unwrap(), theta0)
}

fn tc(n: usize, c: f64, alpha: f64) -> DMatrix<f64> {
    kernel_matrix(&KernelSpec::new(KernelFamily::TunedCorrelated, vec![c, alpha], n).unwrap()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn rls_solves_the_regularized_normal_equations(seed in 0u64..1000, c in 0.1f64..5.0, alpha in 0.2f64..0.95, s2 in 0.01f64..1.0) {
        let (d, _) = simulate(seed, 6, 60, 0.3);
        let p = tc(6, c, alpha);
        let theta = rls_estimate(&d, &p, s2).unwrap();
        // (ΦᵀΦ + σ²P⁻¹) θ = Φᵀy
        let lhs = d.phi().tr_mul(d.phi()) + p.clone().try_inverse().unwrap() * s2;
        let rhs = d.phi().tr_mul(d.y());
        let residual = (&lhs * &theta - &rhs).norm();
        prop_assert!(residual <= 1e-8 * rhs.norm().max(1.0), "{residual}");
    }

    #[test]
    fn eb_matches_the_marginal_likelihood(seed in 0u64..1000, c in 0.1f64..5.0, alpha in 0.2f64..0.95, s2 in 0.01f64..1.0) {
        let (d, _) = simulate(seed, 5, 40, 0.3);
        let p = tc(5, c, alpha);
        let q = d.phi() * &p * d.phi().transpose() + DMatrix::identity(40, 40) * s2;
        let chol = q.clone().cholesky().unwrap();
        let expected = d.y().dot(&chol.solve(d.y())) + chol.l().diagonal().iter().map(|v| 2.0 * v.ln()).sum::<f64>();
        let got = criterion_value(CriterionKind::Eb, &p, &d, s2, None).unwrap();
        prop_assert!((got - expected).abs() <= 1e-9 * expected.abs().max(1.0), "{got} vs {expected}");
    }
}

#[test]
fn single_precision_tracks_double() {
    let (d, theta0) = simulate(3, 8, 200, 0.2);
    let p = tc(8, 1.0, 0.7);
    let d32 = Dataset::new(d.y().map(|v| v as f32), d.phi().map(|v| v as f32)).unwrap();
    let p32 = p.map(|v| v as f32);
    let t32 = theta0.map(|v| v as f32);
    for kind in CriterionKind::ALL {
        let truth = kind.is_oracle().then_some(&theta0);
        let truth32 = kind.is_oracle().then_some(&t32);
        let a = criterion_value(kind, &p, &d, 0.04, truth).unwrap();
        let b = criterion_value(kind, &p32, &d32, 0.04f32, truth32).unwrap() as f64;
        assert!((a - b).abs() <= 1e-3 * a.abs().max(1.0), "{kind}: {a} vs {b}");
    }
}

#[test]
fn w_b_diverges_towards_the_rank_one_kernel() {
    let theta0 = DVector::from_vec(vec![1.0, -0.5, 0.25]);
    let t2 = theta0.norm_squared();
    let mut last = f64::INFINITY;
    for eps in [1e-1f64, 1e-3, 1e-5, 1e-7] {
        let p = &theta0 * theta0.transpose() + DMatrix::identity(3, 3) * eps;
        let got = w_b(&p, &theta0).unwrap();
        // eigenvalues ‖θ₀‖²+ε (along θ₀) and ε twice
        let expected = t2 / (t2 + eps) + (t2 + eps).ln() + 2.0 * eps.ln();
        assert!((got - expected).abs() <= 1e-6 * expected.abs().max(1.0), "{eps}: {got} vs {expected}");
        assert!(got < last - 5.0);
        last = got;
    }
}

#[test]
fn eb_with_tc_recovers_a_decaying_system() {
    let (d, theta0) = simulate(11, 20, 400, 0.1);
    let spec = KernelSpec::new(KernelFamily::TunedCorrelated, vec![1.0, 0.5], 20).unwrap();
    let cfg = OptimizerConfig { restarts: 3, ..OptimizerConfig::default() };
    let rep = estimate_hyperparameter(CriterionKind::Eb, &spec, &d, 0.01, None, &cfg).unwrap();
    assert!(rep.optimizer_diagnostics.converged);
    let fit = fit_metric(&DVector::from_column_slice(&rep.theta_hat), &theta0).unwrap();
    assert!(fit > 85.0, "{fit}");
    let again = estimate_hyperparameter(CriterionKind::Eb, &spec, &d, 0.01, None, &cfg).unwrap();
    assert_eq!(rep.eta_hat, again.eta_hat);
}
