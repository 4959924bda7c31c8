//! `regkern` command-line tool.
//!
//! Exit codes: 0 on success, 2 for bad input or configuration, 3 when the
//! numerics fail (singular or ill-conditioned matrices, no converged restart).

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nalgebra::DVector;
use regkern::bench::{resolve_threads, run_experiment, ExperimentConfig};
use regkern::hyperopt::{closed_form_estimate, estimate_with_moments, OptimizerConfig};
use regkern::model::noise_variance_estimate;
use regkern::{CriterionKind, DataMoments, Dataset, Error, KernelFamily, KernelSpec, RateExperimentConfig};
use serde::Deserialize;

#[derive(Parser)]
#[command(name = "regkern", version, about = "Kernel-based regularized FIR identification")]
struct Cli {
    /// Worker threads (falls back to REGKERN_THREADS, then all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Seed overriding the one in the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file (estimate, closed-form) or directory (benchmark, rates).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate hyperparameters on one dataset and print the report as JSON.
    Estimate(EstimateArgs),
    /// Run a Monte Carlo benchmark from an experiment config.
    Benchmark {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run a convergence-rate experiment and write its slopes.
    Rates {
        #[arg(long)]
        config: PathBuf,
    },
    /// Closed-form ridge or diagonal hyperparameters for a design with ΦᵀΦ = N·I.
    ClosedForm(DataArgs),
}

#[derive(Args)]
struct DataArgs {
    /// CSV with header `t,u,y`.
    #[arg(long)]
    data: PathBuf,
    /// Kernel family: ss, dc, tc, ridge or diagonal.
    #[arg(long, default_value = "tc")]
    family: String,
    /// Criterion: eb, sureg, surey, mseg, msey or eeb.
    #[arg(long, default_value = "eb")]
    criterion: String,
    /// FIR order.
    #[arg(long, default_value_t = 50)]
    order: usize,
    /// Noise variance; estimated from the least-squares residuals when absent.
    #[arg(long)]
    sigma2: Option<f64>,
    /// JSON array with the true impulse response (oracle criteria and fit).
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Keep the first `order` rows, treating inputs before the record as zero.
    #[arg(long)]
    zero_initial: bool,
}

#[derive(Args)]
struct EstimateArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Optimizer settings as a JSON file.
    #[arg(long)]
    optimizer: Option<PathBuf>,
    #[arg(long)]
    restarts: Option<usize>,
}

/// Failure split by exit code.
enum Failure {
    Config(String),
    Numerical(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_numerical() {
            Failure::Numerical(e.to_string())
        } else {
            Failure::Config(e.to_string())
        }
    }
}

type CliResult<T> = Result<T, Failure>;

fn config_err(e: impl std::fmt::Display) -> Failure {
    Failure::Config(e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Numerical(msg)) => {
            eprintln!("numerical failure: {msg}");
            ExitCode::from(3)
        }
    }
}

fn run(cli: Cli) -> CliResult<()> {
    if let Some(threads) = resolve_threads(cli.threads)? {
        rayon::ThreadPoolBuilder::new().num_threads(threads).build_global().map_err(config_err)?;
    }
    match cli.command {
        Command::Estimate(args) => estimate(&args, cli.seed, cli.out.as_deref()),
        Command::ClosedForm(args) => closed_form(&args, cli.out.as_deref()),
        Command::Benchmark { config } => benchmark(&config, cli.seed, cli.out),
        Command::Rates { config } => rates(&config, cli.seed, cli.out),
    }
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| config_err(format!("{}: {e}", path.display())))
}

fn write_output(out: Option<&Path>, text: &str) -> CliResult<()> {
    match out {
        Some(p) => fs::write(p, format!("{text}\n")).map_err(|e| config_err(format!("{}: {e}", p.display()))),
        None => {
            let mut stdout = std::io::stdout().lock();
            writeln!(stdout, "{text}").map_err(config_err)
        }
    }
}

#[derive(Deserialize)]
struct Row {
    t: i64,
    u: f64,
    y: f64,
}

/// Reads `t,u,y` rows; `y(t)` is regressed on `u(t-1), …, u(t-n)`.
fn read_dataset(path: &Path, order: usize, zero_initial: bool) -> CliResult<Dataset<f64>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
    let mut rows: Vec<Row> = Vec::new();
    for (i, row) in reader.deserialize::<Row>().enumerate() {
        rows.push(row.map_err(|e| config_err(format!("{} record {}: {e}", path.display(), i + 1)))?);
    }
    rows.sort_by_key(|r| r.t);
    if rows.windows(2).any(|w| w[1].t != w[0].t + 1) {
        return Err(config_err(format!("{}: column t must hold consecutive integers", path.display())));
    }
    if rows.len() < 2 {
        return Err(config_err(format!("{}: need at least two samples", path.display())));
    }
    let u: Vec<f64> = rows[..rows.len() - 1].iter().map(|r| r.u).collect();
    let y: Vec<f64> = rows[1..].iter().map(|r| r.y).collect();
    Ok(Dataset::from_signals(&u, &y, order, !zero_initial)?)
}

fn parse_family(s: &str) -> CliResult<KernelFamily> {
    serde_json::from_value(serde_json::Value::String(s.to_string()))
        .map_err(|_| config_err(format!("unknown kernel family {s:?} (expected ss, dc, tc, ridge, diagonal)")))
}

fn parse_criterion(s: &str) -> CliResult<CriterionKind> {
    serde_json::from_value(serde_json::Value::String(s.to_string()))
        .map_err(|_| config_err(format!("unknown criterion {s:?} (expected eb, sureg, surey, mseg, msey, eeb)")))
}

struct Problem {
    kind: CriterionKind,
    spec: KernelSpec<f64>,
    moments: DataMoments<f64>,
    sigma2: f64,
    truth: Option<DVector<f64>>,
}

fn problem(args: &DataArgs) -> CliResult<Problem> {
    let kind = parse_criterion(&args.criterion)?;
    let family = parse_family(&args.family)?;
    let d = read_dataset(&args.data, args.order, args.zero_initial)?;
    let sigma2 = match args.sigma2 {
        Some(s) => s,
        None => noise_variance_estimate(&d)?,
    };
    let truth = match &args.truth {
        Some(p) => {
            let v: Vec<f64> = read_json(p)?;
            if v.len() != args.order {
                return Err(config_err(format!("truth has {} taps, order is {}", v.len(), args.order)));
            }
            Some(DVector::from_vec(v))
        }
        None => None,
    };
    if kind.is_oracle() && truth.is_none() {
        return Err(config_err(format!("{kind} is an oracle criterion and needs --truth")));
    }
    Ok(Problem { kind, spec: KernelSpec::template(family, args.order)?, moments: DataMoments::from_dataset(&d), sigma2, truth })
}

fn estimate(args: &EstimateArgs, seed: Option<u64>, out: Option<&Path>) -> CliResult<()> {
    let p = problem(&args.data)?;
    let mut cfg: OptimizerConfig = match &args.optimizer {
        Some(path) => read_json(path)?,
        None => OptimizerConfig::default(),
    };
    if let Some(r) = args.restarts {
        cfg.restarts = r;
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let oracle_truth = p.truth.as_ref().filter(|_| p.kind.is_oracle());
    let mut report = estimate_with_moments(p.kind, &p.spec, &p.moments, p.sigma2, oracle_truth, &cfg)?;
    if let Some(t) = &p.truth {
        report.fit = regkern::model::fit_metric(&DVector::from_column_slice(&report.theta_hat), t).ok();
    }
    write_output(out, &serde_json::to_string_pretty(&report).map_err(config_err)?)
}

fn closed_form(args: &DataArgs, out: Option<&Path>) -> CliResult<()> {
    let p = problem(args)?;
    match closed_form_estimate(p.kind, &p.spec, &p.moments, p.sigma2, p.truth.as_ref())? {
        Some(eta) => {
            let json = serde_json::json!({
                "criterion_kind": p.kind,
                "kernel_family": p.spec.family,
                "sigma2": p.sigma2,
                "eta_hat": eta,
            });
            write_output(out, &serde_json::to_string_pretty(&json).map_err(config_err)?)
        }
        None => Err(config_err(
            "closed forms need a ridge or diagonal kernel and a design with PhiᵀPhi = N·I",
        )),
    }
}

fn benchmark(config: &Path, seed: Option<u64>, out: Option<PathBuf>) -> CliResult<()> {
    let mut cfg: ExperimentConfig = read_json(config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(o) = out {
        cfg.output_dir = o;
    }
    let result = run_experiment(&cfg)?;
    result.write(&cfg.output_dir)?;
    eprintln!("wrote runs.csv, summary.json, boxplot.csv to {}", cfg.output_dir.display());
    Ok(())
}

fn rates(config: &Path, seed: Option<u64>, out: Option<PathBuf>) -> CliResult<()> {
    let mut cfg: RateExperimentConfig = read_json(config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let dir = out.unwrap_or_else(|| PathBuf::from("out"));
    fs::create_dir_all(&dir).map_err(|e| config_err(format!("{}: {e}", dir.display())))?;
    let result = cfg.run()?;
    result.write_csv(&dir.join("rates.csv"))?;
    result.write_summary(&dir.join("slopes.json"))?;
    eprintln!("wrote rates.csv, slopes.json to {}", dir.display());
    Ok(())
}
