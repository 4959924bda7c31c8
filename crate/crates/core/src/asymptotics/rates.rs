//! Monte Carlo estimate of how fast the hyperparameter estimators approach
//! their limits.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{limit_eta, LimitKind, LimitSpec};
use crate::bench::{generate_input_with, input_covariance, InputKind};
use crate::criteria::{CriterionKind, DataMoments};
use crate::error::{Error, Result};
use crate::hyperopt::{estimate_with_moments, OptimizerConfig};
use crate::kernels::{KernelFamily, KernelSpec};
use crate::model::{build_regressor, Dataset};

/// Differences between estimators, reported alongside the errors against `η*`.
pub const PAIR_SERIES: [(&str, CriterionKind, CriterionKind); 3] = [
    ("EEB-EB", CriterionKind::Eeb, CriterionKind::Eb),
    ("MSEg-SUREg", CriterionKind::MseG, CriterionKind::SureG),
    ("MSEy-SUREy", CriterionKind::MseY, CriterionKind::SureY),
];

const BOOTSTRAP_STREAM_BASE: u64 = 1 << 32;

/// One row of the error table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateRecord {
    pub kind: String,
    #[serde(rename = "N")]
    pub n: usize,
    pub replicate: usize,
    pub error: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RateResult {
    #[serde(rename = "N_grid")]
    pub n_grid: Vec<usize>,
    pub replicates: usize,
    pub limits: BTreeMap<LimitKind, Vec<f64>>,
    pub median_errors: BTreeMap<String, Vec<f64>>,
    pub fitted_slope: BTreeMap<String, f64>,
    pub slope_ci: BTreeMap<String, [f64; 2]>,
    /// Estimator failures per kind; a failed replicate is dropped from that
    /// kind's series and from the pairs it belongs to.
    pub failures: BTreeMap<String, usize>,
    #[serde(skip)]
    pub records: Vec<RateRecord>,
}

impl RateResult {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(io_error)?;
        for r in &self.records {
            w.serialize(r).map_err(io_error)?;
        }
        w.flush().map_err(io_error)
    }

    pub fn write_summary(&self, path: &Path) -> Result<()> {
        let mut f = File::create(path).map_err(io_error)?;
        serde_json::to_writer_pretty(&mut f, self).map_err(io_error)?;
        writeln!(f).map_err(io_error)
    }

    pub fn errors(&self, kind: &str, n: usize) -> Vec<f64> {
        self.records.iter().filter(|r| r.kind == kind && r.n == n).map(|r| r.error).collect()
    }
}

fn io_error(e: impl std::fmt::Display) -> Error {
    Error::InvalidArgument(format!("writing results: {e}"))
}

fn default_family() -> KernelFamily {
    KernelFamily::TunedCorrelated
}

fn default_input() -> InputKind {
    InputKind::It2
}

fn default_replicates() -> usize {
    30
}

fn default_bootstrap() -> usize {
    1000
}

/// File form of a rate experiment; `Σ` is the stationary covariance of the input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateExperimentConfig {
    pub theta0: Vec<f64>,
    pub sigma2: f64,
    #[serde(default = "default_family")]
    pub kernel_family: KernelFamily,
    #[serde(default = "default_input")]
    pub input_kind: InputKind,
    #[serde(rename = "N_grid")]
    pub n_grid: Vec<usize>,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_bootstrap")]
    pub bootstrap: usize,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
}

impl RateExperimentConfig {
    pub fn limit_spec(&self) -> Result<LimitSpec<f64>> {
        let n = self.theta0.len();
        if n == 0 {
            return Err(Error::Dimension("theta0 is empty".into()));
        }
        let spec = KernelSpec::template(self.kernel_family, n)?;
        LimitSpec::new(input_covariance(self.input_kind, n), DVector::from_vec(self.theta0.clone()), self.sigma2, spec)
    }

    pub fn run(&self) -> Result<RateResult> {
        run_experiment(&self.limit_spec()?, self.input_kind, &self.n_grid, self.replicates, self.seed, self.bootstrap, &self.optimizer)
    }
}

/// Data set of `N` rows (after dropping `n` burn-in rows) from input
/// `input_kind`, true response `θ₀` and noise variance `σ²`. Each `stream`
/// gives an independent draw for the same `seed`.
pub fn simulate(ls: &LimitSpec<f64>, input_kind: InputKind, big_n: usize, seed: u64, stream: u64) -> Result<Dataset<f64>> {
    let n = ls.theta0().len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let len = big_n + n;
    let u = generate_input_with(input_kind, len, &mut rng);
    let noise = Normal::new(0.0, ls.sigma2().sqrt()).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let phi = build_regressor(&u, n, len)?;
    let y: Vec<f64> = (&phi * ls.theta0()).iter().map(|v| v + noise.sample(&mut rng)).collect();
    Dataset::from_signals(&u, &y, n, true)
}

/// Runs all six estimators on `replicates` data sets per `N` and records
/// `‖η̂ − η*‖` against the matching limit, plus the pairwise gaps in
/// [`PAIR_SERIES`]. Slopes are ordinary least squares of log median error
/// against log `N`, with 1000 bootstrap resamples for the interval.
pub fn convergence_rate_experiment(
    ls: &LimitSpec<f64>,
    input_kind: InputKind,
    n_grid: &[usize],
    replicates: usize,
    seed: u64,
    cfg: &OptimizerConfig,
) -> Result<RateResult> {
    run_experiment(ls, input_kind, n_grid, replicates, seed, default_bootstrap(), cfg)
}

fn run_experiment(
    ls: &LimitSpec<f64>,
    input_kind: InputKind,
    n_grid: &[usize],
    replicates: usize,
    seed: u64,
    bootstrap: usize,
    cfg: &OptimizerConfig,
) -> Result<RateResult> {
    if n_grid.len() < 3 {
        return Err(Error::InvalidArgument("the N grid needs at least 3 points".into()));
    }
    if n_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument("the N grid must be strictly increasing".into()));
    }
    if replicates < 20 {
        return Err(Error::InvalidArgument("at least 20 replicates are needed".into()));
    }
    if bootstrap == 0 {
        return Err(Error::InvalidArgument("bootstrap needs at least one resample".into()));
    }
    let n = ls.theta0().len();
    if n_grid[0] < n {
        return Err(Error::Dimension(format!("smallest N = {} is below n = {n}", n_grid[0])));
    }
    cfg.validate()?;

    let mut limits = BTreeMap::new();
    for kind in LimitKind::ALL {
        limits.insert(kind, limit_eta(kind, ls, cfg)?);
    }

    let items: Vec<(usize, usize)> = (0..n_grid.len()).flat_map(|g| (0..replicates).map(move |r| (g, r))).collect();
    let estimates: Vec<Vec<Option<Vec<f64>>>> = items
        .par_iter()
        .map(|&(g, r)| {
            let stream = (g * replicates + r) as u64;
            let Ok(d) = simulate(ls, input_kind, n_grid[g], seed, stream) else {
                return vec![None; CriterionKind::ALL.len()];
            };
            let moments = DataMoments::from_dataset(&d);
            CriterionKind::ALL
                .iter()
                .map(|&kind| {
                    let truth = kind.is_oracle().then_some(ls.theta0());
                    estimate_with_moments(kind, ls.family(), &moments, ls.sigma2(), truth, cfg).ok().map(|rep| rep.eta_hat)
                })
                .collect()
        })
        .collect();

    let slot = |kind: CriterionKind| CriterionKind::ALL.iter().position(|k| *k == kind).unwrap();
    let mut records = Vec::new();
    let mut failures = BTreeMap::new();
    for kind in CriterionKind::ALL {
        let limit = &limits[&LimitKind::of(kind)];
        let mut failed = 0;
        for (&(g, r), row) in items.iter().zip(&estimates) {
            match &row[slot(kind)] {
                Some(eta) => records.push(RateRecord { kind: kind.name().into(), n: n_grid[g], replicate: r, error: distance(eta, limit) }),
                None => failed += 1,
            }
        }
        failures.insert(kind.name().to_string(), failed);
    }
    for (name, a, b) in PAIR_SERIES {
        for (&(g, r), row) in items.iter().zip(&estimates) {
            if let (Some(x), Some(y)) = (&row[slot(a)], &row[slot(b)]) {
                records.push(RateRecord { kind: name.into(), n: n_grid[g], replicate: r, error: distance(x, y) });
            }
        }
    }

    let series: Vec<String> = CriterionKind::ALL
        .iter()
        .map(|k| k.name().to_string())
        .chain(PAIR_SERIES.iter().map(|p| p.0.to_string()))
        .collect();
    let mut median_errors = BTreeMap::new();
    let mut fitted_slope = BTreeMap::new();
    let mut slope_ci = BTreeMap::new();
    for (si, name) in series.iter().enumerate() {
        let groups: Vec<Vec<f64>> = n_grid
            .iter()
            .map(|&big_n| records.iter().filter(|r| &r.kind == name && r.n == big_n).map(|r| r.error).collect())
            .collect();
        let medians: Vec<f64> = groups.iter().map(|g| median(g)).collect();
        fitted_slope.insert(name.clone(), log_log_slope(n_grid, &medians));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(BOOTSTRAP_STREAM_BASE + si as u64);
        let mut slopes: Vec<f64> = (0..bootstrap)
            .map(|_| {
                let m: Vec<f64> = groups
                    .iter()
                    .map(|g| {
                        let sample: Vec<f64> = (0..g.len()).map(|_| g[rng.random_range(0..g.len())]).collect();
                        median(&sample)
                    })
                    .collect();
                log_log_slope(n_grid, &m)
            })
            .filter(|s| s.is_finite())
            .collect();
        slopes.sort_by(f64::total_cmp);
        slope_ci.insert(name.clone(), [quantile(&slopes, 0.025), quantile(&slopes, 0.975)]);
        median_errors.insert(name.clone(), medians);
    }

    Ok(RateResult {
        n_grid: n_grid.to_vec(),
        replicates,
        limits,
        median_errors,
        fitted_slope,
        slope_ci,
        failures,
        records,
    })
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// NaN for an empty sample.
pub fn median(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// Linear interpolation between order statistics of a sorted sample.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// OLS slope of `ln y` against `ln N`; NaN if any `y` is not positive.
pub fn log_log_slope(n_grid: &[usize], y: &[f64]) -> f64 {
    if y.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
        return f64::NAN;
    }
    let x = DMatrix::from_fn(n_grid.len(), 2, |i, j| if j == 0 { 1.0 } else { (n_grid[i] as f64).ln() });
    let ly = DVector::from_iterator(y.len(), y.iter().map(|v| v.ln()));
    match (x.tr_mul(&x)).try_inverse() {
        Some(inv) => (inv * x.tr_mul(&ly))[1],
        None => f64::NAN,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn slope_of_exact_power_law() {
        let grid = [100, 400, 1600];
        let y: Vec<f64> = grid.iter().map(|&n| 3.0 * (n as f64).powf(-0.5)).collect();
        assert_relative_eq!(log_log_slope(&grid, &y), -0.5, epsilon = 1e-12);
        assert!(log_log_slope(&grid, &[1.0, 0.0, 1.0]).is_nan());
    }

    #[test]
    fn median_and_quantile() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert!(median(&[]).is_nan());
        assert_eq!(quantile(&[0.0, 1.0, 2.0, 3.0, 4.0], 0.5), 2.0);
        assert_relative_eq!(quantile(&[0.0, 10.0], 0.025), 0.25);
    }

    #[test]
    fn simulation_is_reproducible_and_streams_differ() {
        let spec = KernelSpec::new(KernelFamily::TunedCorrelated, vec![1.0, 0.5], 3).unwrap();
        let ls = LimitSpec::new(DMatrix::identity(3, 3), DVector::from_vec(vec![1.0, 0.5, 0.25]), 0.1, spec).unwrap();
        let a = simulate(&ls, InputKind::It2, 50, 1, 0).unwrap();
        let b = simulate(&ls, InputKind::It2, 50, 1, 0).unwrap();
        let c = simulate(&ls, InputKind::It2, 50, 1, 1).unwrap();
        assert_eq!(a.n_samples(), 50);
        assert_eq!(a.y(), b.y());
        assert_ne!(a.y(), c.y());
        // noise-free part is exactly Φθ₀
        let resid = a.y() - a.phi() * ls.theta0();
        assert!(resid.amax() < 2.0);
    }

    #[test]
    fn preconditions_are_checked() {
        let spec = KernelSpec::new(KernelFamily::Ridge, vec![1.0], 2).unwrap();
        let ls = LimitSpec::new(DMatrix::identity(2, 2), DVector::from_vec(vec![1.0, 0.5]), 0.1, spec).unwrap();
        let cfg = OptimizerConfig::default();
        assert!(convergence_rate_experiment(&ls, InputKind::It2, &[100, 200], 20, 0, &cfg).is_err());
        assert!(convergence_rate_experiment(&ls, InputKind::It2, &[100, 100, 200], 20, 0, &cfg).is_err());
        assert!(convergence_rate_experiment(&ls, InputKind::It2, &[100, 200, 400], 5, 0, &cfg).is_err());
    }

    #[test]
    fn ridge_experiment_summarizes_every_series() {
        let spec = KernelSpec::new(KernelFamily::Ridge, vec![1.0], 3).unwrap();
        let ls = LimitSpec::new(DMatrix::identity(3, 3), DVector::from_vec(vec![1.0, -0.6, 0.3]), 0.5, spec).unwrap();
        let cfg = OptimizerConfig { restarts: 2, ..Default::default() };
        let res = run_experiment(&ls, InputKind::It2, &[100, 400, 1600], 20, 5, 200, &cfg).unwrap();
        assert_eq!(res.median_errors.len(), 9);
        for (name, m) in &res.median_errors {
            assert_eq!(m.len(), 3, "{name}");
            let ci = res.slope_ci[name];
            assert!(ci[0] <= ci[1], "{name}: {ci:?}");
        }
        assert!(res.failures.values().all(|f| *f == 0));
        // recompute one median from the raw rows
        assert_relative_eq!(res.median_errors["EB"][1], median(&res.errors("EB", 400)));
        // everything shrinks with N for a 1-D ridge problem
        assert!(res.fitted_slope["EB"] < 0.0);
        assert!(res.fitted_slope["EEB"] < 0.0);

        let dir = tempfile::tempdir().unwrap();
        res.write_csv(&dir.path().join("rates.csv")).unwrap();
        res.write_summary(&dir.path().join("slopes.json")).unwrap();
        let text = std::fs::read_to_string(dir.path().join("rates.csv")).unwrap();
        assert!(text.starts_with("kind,N,replicate,error"));
        assert_eq!(text.lines().count(), 1 + res.records.len());
        let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("slopes.json")).unwrap()).unwrap();
        assert!(json["fitted_slope"]["EB"].is_number());
    }

    #[test]
    fn config_parses_with_defaults() {
        let cfg: RateExperimentConfig = serde_json::from_str(r#"{"theta0": [1.0, 0.5], "sigma2": 0.1, "N_grid": [100, 200, 400]}"#).unwrap();
        assert_eq!(cfg.kernel_family, KernelFamily::TunedCorrelated);
        assert_eq!(cfg.replicates, 30);
        assert_eq!(cfg.bootstrap, 1000);
        assert_eq!(cfg.limit_spec().unwrap().sigma(), &DMatrix::identity(2, 2));
        assert!(serde_json::from_str::<RateExperimentConfig>(r#"{"theta0": [1.0], "sigma2": 0.1, "N_grid": [1], "bogus": 1}"#).is_err());
    }
}
