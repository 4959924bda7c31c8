//! Monte Carlo benchmark: random test systems, test inputs, and the runner
//! that estimates every requested hyperparameter criterion per system.

mod signals;
mod systems;

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::criteria::{CriterionKind, DataMoments};
use crate::error::{Error, Result};
use crate::hyperopt::{estimate_with_fit, OptimizerConfig};
use crate::kernels::{KernelFamily, KernelSpec};
use crate::model::{build_regressor, Dataset};

pub use signals::{
    autocorrelation, generate_input, generate_input_with, input_covariance, lowpass_taps, InputKind, LOWPASS_CUTOFF,
    LOWPASS_ORDER,
};
pub use systems::{
    generate_test_system, generate_test_system_with, spectral_radius, TestSystem, MAX_SPECTRAL_RADIUS,
    MIN_SPECTRAL_RADIUS,
};

/// Environment variable consulted for the worker count when none is given.
pub const THREADS_ENV: &str = "REGKERN_THREADS";

fn d_num_systems() -> usize {
    100
}
fn d_order() -> usize {
    30
}
fn d_fir_n() -> usize {
    200
}
fn d_snr() -> [f64; 2] {
    [1.0, 10.0]
}
fn d_family() -> KernelFamily {
    KernelFamily::TunedCorrelated
}
fn d_estimators() -> Vec<CriterionKind> {
    CriterionKind::ALL.to_vec()
}
fn d_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "d_num_systems")]
    pub num_systems: usize,
    #[serde(default = "d_order")]
    pub system_order: usize,
    #[serde(default = "d_fir_n")]
    pub fir_n: usize,
    pub input_kind: InputKind,
    #[serde(rename = "N")]
    pub n_samples: usize,
    #[serde(default = "d_snr")]
    pub snr_range: [f64; 2],
    #[serde(default = "d_family")]
    pub kernel_family: KernelFamily,
    #[serde(default = "d_estimators")]
    pub estimators: Vec<CriterionKind>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "d_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_systems == 0 || self.system_order == 0 || self.fir_n == 0 {
            return Err(Error::InvalidArgument("num_systems, system_order and fir_n must be positive".into()));
        }
        if self.n_samples <= self.fir_n {
            return Err(Error::InvalidArgument(format!("N = {} must exceed fir_n = {}", self.n_samples, self.fir_n)));
        }
        let [lo, hi] = self.snr_range;
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return Err(Error::InvalidArgument(format!("snr_range {:?} must lie in (0, inf) with lo <= hi", self.snr_range)));
        }
        if self.estimators.is_empty() {
            return Err(Error::InvalidArgument("no estimators requested".into()));
        }
        self.optimizer.validate()
    }
}

/// One estimator on one system. Failed estimates carry NaN numbers and an error tag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub system_id: usize,
    pub estimator: CriterionKind,
    pub fit: f64,
    pub eta_hat: Vec<f64>,
    pub cond_gram: f64,
    pub snr: f64,
    pub sigma2: f64,
    pub wall_time_ms: f64,
    pub error: Option<String>,
}

/// Everything one system contributes before estimation.
#[derive(Debug, Clone)]
pub struct SystemDraw {
    pub system: TestSystem,
    pub data: Dataset<f64>,
    pub snr: f64,
    pub sigma2: f64,
    /// Sample variance of the noise-free output `Φθ₀`.
    pub signal_variance: f64,
}

fn sample_variance(x: &DVector<f64>) -> f64 {
    let n = x.len() as f64;
    let mean = x.sum() / n;
    x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
}

/// Draws system `system_id` of the experiment from its own stream of `seed`.
pub fn draw_system(cfg: &ExperimentConfig, system_id: usize) -> Result<SystemDraw> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(system_id as u64);
    let system = generate_test_system_with(cfg.system_order, cfg.fir_n, &mut rng)?;
    let n = cfg.fir_n;
    let len = cfg.n_samples + n;
    let u = generate_input_with(cfg.input_kind, len, &mut rng);
    let phi = build_regressor(&u, n, len)?;
    let clean = &phi * &system.theta0;
    // the SNR refers to the rows that are kept after the burn-in
    let signal_variance = sample_variance(&clean.rows(n, cfg.n_samples).into_owned());
    let [lo, hi] = cfg.snr_range;
    let snr = if lo == hi { lo } else { rng.random_range(lo..hi) };
    let sigma2 = signal_variance / snr;
    let noise = Normal::new(0.0, sigma2.sqrt()).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let y: Vec<f64> = clean.iter().map(|v| v + noise.sample(&mut rng)).collect();
    let data = Dataset::from_signals(&u, &y, n, true)?;
    Ok(SystemDraw { system, data, snr, sigma2, signal_variance })
}

fn error_tag(e: &Error) -> String {
    match e {
        Error::NonConvergence { .. } => "non_convergence".into(),
        Error::IllConditioned { .. } => "ill_conditioned".into(),
        Error::InvalidKernel { .. } => "invalid_kernel".into(),
        Error::Singular(_) => "singular".into(),
        Error::UndefinedFit => "undefined_fit".into(),
        other => format!("{other}"),
    }
}

fn run_system(cfg: &ExperimentConfig, system_id: usize) -> Vec<RunRecord> {
    let failed = |estimator, error: String| RunRecord {
        system_id,
        estimator,
        fit: f64::NAN,
        eta_hat: vec![],
        cond_gram: f64::NAN,
        snr: f64::NAN,
        sigma2: f64::NAN,
        wall_time_ms: 0.0,
        error: Some(error),
    };
    let draw = match draw_system(cfg, system_id) {
        Ok(d) => d,
        Err(e) => return cfg.estimators.iter().map(|&k| failed(k, error_tag(&e))).collect(),
    };
    let moments = DataMoments::from_dataset(&draw.data);
    let cond_gram = moments.condition();
    let spec = match KernelSpec::template(cfg.kernel_family, cfg.fir_n) {
        Ok(s) => s,
        Err(e) => return cfg.estimators.iter().map(|&k| failed(k, error_tag(&e))).collect(),
    };
    cfg.estimators
        .iter()
        .map(|&kind| {
            let start = Instant::now();
            let res = estimate_with_fit(kind, &spec, &moments, draw.sigma2, &draw.system.theta0, &cfg.optimizer);
            let wall_time_ms = start.elapsed().as_secs_f64() * 1e3;
            let (fit, eta_hat, error) = match res {
                Ok(rep) => (rep.fit.unwrap_or(f64::NAN), rep.eta_hat, None),
                Err(e) => (f64::NAN, vec![], Some(error_tag(&e))),
            };
            RunRecord { system_id, estimator: kind, fit, eta_hat, cond_gram, snr: draw.snr, sigma2: draw.sigma2, wall_time_ms, error }
        })
        .collect()
}

/// Per-estimator aggregate over the systems.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorSummary {
    pub estimator: CriterionKind,
    /// Mean over systems with a finite fit.
    pub mean_fit: f64,
    pub median_fit: f64,
    pub completed: usize,
    pub failed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub input_kind: InputKind,
    #[serde(rename = "N")]
    pub n_samples: usize,
    pub num_systems: usize,
    pub kernel_family: KernelFamily,
    pub estimators: Vec<EstimatorSummary>,
    pub median_cond_gram: f64,
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub records: Vec<RunRecord>,
    pub summary: ExperimentSummary,
}

impl ExperimentResult {
    pub fn summary_for(&self, kind: CriterionKind) -> Option<&EstimatorSummary> {
        self.summary.estimators.iter().find(|s| s.estimator == kind)
    }

    /// Writes `runs.csv`, `summary.json` and `boxplot.csv` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(io_error)?;
        write_runs_csv(&self.records, &dir.join("runs.csv"))?;
        let mut f = File::create(dir.join("summary.json")).map_err(io_error)?;
        serde_json::to_writer_pretty(&mut f, &self.summary).map_err(io_error)?;
        writeln!(f).map_err(io_error)?;
        write_boxplot_csv(&self.records, &dir.join("boxplot.csv"))
    }
}

fn io_error(e: impl std::fmt::Display) -> Error {
    Error::InvalidArgument(format!("writing results: {e}"))
}

#[derive(Serialize, Deserialize)]
struct RunRow {
    system_id: usize,
    estimator: CriterionKind,
    fit: f64,
    eta_hat: String,
    cond_gram: f64,
    snr: f64,
    sigma2: f64,
    wall_time_ms: f64,
    error: String,
}

fn write_runs_csv(records: &[RunRecord], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(io_error)?;
    for r in records {
        let eta_hat = r.eta_hat.iter().map(|x| format!("{x:e}")).collect::<Vec<_>>().join(" ");
        w.serialize(RunRow {
            system_id: r.system_id,
            estimator: r.estimator,
            fit: r.fit,
            eta_hat,
            cond_gram: r.cond_gram,
            snr: r.snr,
            sigma2: r.sigma2,
            wall_time_ms: r.wall_time_ms,
            error: r.error.clone().unwrap_or_default(),
        })
        .map_err(io_error)?;
    }
    w.flush().map_err(io_error)
}

/// Reads back a `runs.csv`.
pub fn read_runs_csv(path: &Path) -> Result<Vec<RunRecord>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::InvalidArgument(format!("{}: {e}", path.display())))?;
    r.deserialize::<RunRow>()
        .map(|row| {
            let row = row.map_err(|e| Error::InvalidArgument(format!("{}: {e}", path.display())))?;
            let eta_hat = row
                .eta_hat
                .split_whitespace()
                .map(|s| s.parse::<f64>().map_err(|e| Error::InvalidArgument(format!("eta_hat {s:?}: {e}"))))
                .collect::<Result<Vec<_>>>()?;
            Ok(RunRecord {
                system_id: row.system_id,
                estimator: row.estimator,
                fit: row.fit,
                eta_hat,
                cond_gram: row.cond_gram,
                snr: row.snr,
                sigma2: row.sigma2,
                wall_time_ms: row.wall_time_ms,
                error: (!row.error.is_empty()).then_some(row.error),
            })
        })
        .collect()
}

/// Quantiles used for the box plots.
pub const BOXPLOT_QUANTILES: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];

fn quantiles(values: &[f64]) -> [f64; 5] {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return [f64::NAN; 5];
    }
    v.sort_by(f64::total_cmp);
    BOXPLOT_QUANTILES.map(|q| {
        let pos = q * (v.len() - 1) as f64;
        let lo = pos.floor() as usize;
        let hi = pos.ceil() as usize;
        v[lo] + (pos - lo as f64) * (v[hi] - v[lo])
    })
}

#[derive(Serialize)]
struct BoxRow {
    series: String,
    min: f64,
    q1: f64,
    median: f64,
    q3: f64,
    max: f64,
}

fn write_boxplot_csv(records: &[RunRecord], path: &Path) -> Result<()> {
    let mut series: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let mut cond: BTreeMap<usize, f64> = BTreeMap::new();
    for r in records {
        series.entry(format!("fit_{}", r.estimator.name())).or_default().push(r.fit);
        cond.insert(r.system_id, r.cond_gram);
    }
    series.insert("cond_gram".into(), cond.into_values().collect());
    let mut w = csv::Writer::from_path(path).map_err(io_error)?;
    for (name, values) in series {
        let [min, q1, median, q3, max] = quantiles(&values);
        w.serialize(BoxRow { series: name, min, q1, median, q3, max }).map_err(io_error)?;
    }
    w.flush().map_err(io_error)
}

/// Aggregates run records into the per-estimator table.
pub fn summarize(cfg: &ExperimentConfig, records: &[RunRecord]) -> ExperimentSummary {
    let estimators = cfg
        .estimators
        .iter()
        .map(|&kind| {
            let fits: Vec<f64> = records.iter().filter(|r| r.estimator == kind).map(|r| r.fit).collect();
            let ok: Vec<f64> = fits.iter().copied().filter(|f| f.is_finite()).collect();
            let mean_fit = if ok.is_empty() { f64::NAN } else { ok.iter().sum::<f64>() / ok.len() as f64 };
            EstimatorSummary {
                estimator: kind,
                mean_fit,
                median_fit: quantiles(&ok)[2],
                completed: ok.len(),
                failed: fits.len() - ok.len(),
            }
        })
        .collect();
    let mut cond: BTreeMap<usize, f64> = BTreeMap::new();
    for r in records {
        cond.insert(r.system_id, r.cond_gram);
    }
    ExperimentSummary {
        input_kind: cfg.input_kind,
        n_samples: cfg.n_samples,
        num_systems: cfg.num_systems,
        kernel_family: cfg.kernel_family,
        estimators,
        median_cond_gram: quantiles(&cond.into_values().collect::<Vec<_>>())[2],
    }
}

/// Runs every estimator on every system; systems are processed in parallel
/// on the current rayon pool and each owns the PRNG stream `system_id`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    let records: Vec<RunRecord> = (0..cfg.num_systems).into_par_iter().flat_map_iter(|id| run_system(cfg, id)).collect();
    let summary = summarize(cfg, &records);
    Ok(ExperimentResult { records, summary })
}

/// Worker count from an explicit value or the environment; `None` leaves
/// the choice to rayon.
pub fn resolve_threads(explicit: Option<usize>) -> Result<Option<usize>> {
    if let Some(t) = explicit {
        return if t == 0 { Err(Error::InvalidArgument("--threads must be at least 1".into())) } else { Ok(Some(t)) };
    }
    match std::env::var(THREADS_ENV) {
        Ok(s) => s
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|t| *t > 0)
            .map(Some)
            .ok_or_else(|| Error::InvalidArgument(format!("{THREADS_ENV}={s:?} is not a positive integer"))),
        Err(_) => Ok(None),
    }
}
