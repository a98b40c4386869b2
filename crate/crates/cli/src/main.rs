//! `mhr`: thresholds, simulations, sweeps and interpolation-constant
//! estimates for memristive Hindmarsh–Rose networks.
//!
//! Exit codes: 0 success, 2 usage or configuration error, 3 numerical
//! divergence.

mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;
use mhr_core::analysis::{compute_constants, estimate_gn_constant, interpolation_index};
use mhr_core::grid::{Axis, Grid};
use mhr_core::harness::{run_experiment, run_sweep, write_sweep, AnalysisSettings, ExperimentSpec, HarnessError, SweepSpec};
use mhr_core::{IntegrateError, Parameters, Verdict};
use serde::Deserialize;

use config::ConfigError;

#[derive(Parser, Debug)]
#[command(name = "mhr", version, about = "Memristive Hindmarsh-Rose network simulator and synchronization analysis")]
struct Cli {
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    /// Worker threads for sweeps (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone, Default)]
struct ConfigArgs {
    /// TOML configuration file.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Dotted-path override, e.g. `--set parameters.P=25` (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Args, Debug, Clone)]
struct RunArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Output directory (overrides `output_dir` in the config).
    #[arg(short, long, env = "MHR_OUT_DIR")]
    out: Option<PathBuf>,
    /// Allow explicit RK4 above its stability limit.
    #[arg(long)]
    no_stability_guard: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Print derived constants and coupling thresholds.
    Thresholds {
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Run one experiment and write timeseries.csv and report.json.
    Simulate(RunArgs),
    /// Run a (P, Q) sweep over replicate seeds.
    Sweep(RunArgs),
    /// Estimate the interpolation constant C* on a grid.
    EstimateCstar {
        /// Domain extent per axis (one or two values).
        #[arg(long, num_args = 1..=2, default_values_t = [1.0])]
        extent: Vec<f64>,
        /// Cells per axis (one or two values).
        #[arg(long, num_args = 1..=2, default_values_t = [128])]
        cells: Vec<usize>,
        #[arg(long, default_value_t = 200)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

enum Failure {
    Usage(String),
    Diverged(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Usage(e.0)
    }
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        match e {
            HarnessError::Integrate(IntegrateError::BlowUp { .. }) => Failure::Diverged(e.to_string()),
            other => Failure::Usage(other.to_string()),
        }
    }
}

/// Subset of an experiment config needed for thresholds; other keys are ignored.
#[derive(Deserialize)]
struct ThresholdInput {
    parameters: Parameters,
    grid: Option<Grid>,
    #[serde(default)]
    analysis: Option<AnalysisSettings>,
}

const DEFAULT_ORIGIN: &str = "<built-in all-ones scenario>";

fn default_config_text() -> String {
    toml::to_string(&ExperimentSpec::all_ones_default()).expect("default spec serializes")
}

fn load<T: serde::de::DeserializeOwned>(args: &ConfigArgs, required: bool) -> Result<T, Failure> {
    let (text, origin) = match &args.config {
        Some(path) => (config::read(path)?, path.display().to_string()),
        None if required => return Err(Failure::Usage("--config is required for this command".into())),
        None => (default_config_text(), DEFAULT_ORIGIN.to_string()),
    };
    Ok(config::decode(&text, &origin, &args.overrides)?)
}

fn thresholds(args: &ConfigArgs) -> Result<(), Failure> {
    let input: ThresholdInput = load(args, false)?;
    let omega = input.grid.as_ref().map_or(1.0, Grid::measure);
    let cstar = input.analysis.map_or(1.0, |a| a.cstar);
    let dc = compute_constants(&input.parameters, omega, cstar).map_err(|e| Failure::Usage(e.to_string()))?;
    let rows = [
        ("C1", dc.c1),
        ("C2", dc.c2),
        ("lambda", dc.lambda),
        ("M", dc.m_bound),
        ("K", dc.k_radius),
        ("Cmult", dc.c_mult),
        ("Pmin", dc.p_min),
        ("Qmin", dc.q_min),
        ("xi(P)", dc.xi),
        ("kappa", dc.kappa),
        ("cstar", dc.cstar),
        ("|Omega|", dc.omega_measure),
    ];
    for (name, value) in rows {
        println!("{name:<8} {value}");
    }
    let p = &input.parameters;
    println!(
        "P = {} {} Pmin, Q = {} {} Qmin",
        p.coupling_p,
        if p.coupling_p > dc.p_min { ">" } else { "<=" },
        p.coupling_q,
        if p.coupling_q >= dc.q_min { ">=" } else { "<" },
    );
    println!("{}", serde_json::to_string(&dc).expect("constants serialize"));
    Ok(())
}

fn apply_run_args(spec: &mut ExperimentSpec, args: &RunArgs) {
    if let Some(out) = &args.out {
        spec.output_dir = out.clone();
    }
    if args.no_stability_guard {
        spec.integrator.enforce_stability = false;
    }
}

fn simulate(args: &RunArgs) -> Result<(), Failure> {
    let mut spec: ExperimentSpec = load(&args.config, false)?;
    apply_run_args(&mut spec, args);
    info!("simulating m = {} on {} cells to t = {}", spec.parameters.m, spec.grid.len(), spec.integrator.t_end);
    let art = run_experiment(&spec)?;
    let sync = &art.report.sync;
    println!("verdict: {}", sync.verdict);
    match sync.fitted_rate {
        Some(rate) => println!("fitted rate: {rate:.6} (predicted kappa {:.6})", sync.predicted_kappa),
        None => println!("fitted rate: n/a (predicted kappa {:.6})", sync.predicted_kappa),
    }
    println!("final max gap: {:e}", sync.final_max_gap);
    println!("envelope: {} (margin {:.4})", if sync.envelope.pass { "inside" } else { "VIOLATED" }, sync.envelope.margin);
    println!("timeseries: {}", art.timeseries.display());
    println!("report: {}", art.report_path.display());
    if sync.verdict == Verdict::Diverged {
        return Err(Failure::Diverged(art.report.divergence.unwrap_or_default()));
    }
    Ok(())
}

fn sweep(args: &RunArgs) -> Result<(), Failure> {
    let mut spec: SweepSpec = load(&args.config, true)?;
    apply_run_args(&mut spec.base, args);
    let out_dir = spec.base.output_dir.clone();
    let report = run_sweep(&spec)?;
    println!("Pmin = {}  Qmin = {:e}", report.p_min, report.q_min);
    println!("{:>14} {:>14} {:>12} {:>24}", "P", "Q", "median rate", "verdict");
    for c in &report.cells {
        let rate = c.median_rate.map_or("n/a".to_string(), |r| format!("{r:.6}"));
        let verdict = c.verdict.map_or("failed".to_string(), |v| v.to_string());
        println!("{:>14} {:>14e} {rate:>12} {verdict:>24}", c.p, c.q);
    }
    for t in &report.trend {
        info!("Q = {:e}: median rate nondecreasing in P above Pmin: {}", t.q, t.nondecreasing);
    }
    let (json, csv) = write_sweep(&report, &out_dir)?;
    println!("report: {}", json.display());
    println!("summary: {}", csv.display());
    Ok(())
}

fn estimate_cstar(extent: &[f64], cells: &[usize], samples: usize, seed: u64) -> Result<(), Failure> {
    if extent.len() != cells.len() {
        return Err(Failure::Usage(format!("{} extents but {} cell counts", extent.len(), cells.len())));
    }
    let axes = extent.iter().zip(cells).map(|(&extent, &cells)| Axis { extent, cells }).collect();
    let grid = Grid::new(axes).map_err(|e| Failure::Usage(e.to_string()))?;
    let value = estimate_gn_constant(&grid, samples, seed).map_err(|e| Failure::Usage(e.to_string()))?;
    println!("theta = {}", interpolation_index(grid.dim()));
    println!("cstar = {value:.16e}");
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    if let Some(jobs) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| Failure::Usage(format!("--jobs: {e}")))?;
    }
    match &cli.command {
        Command::Thresholds { config } => thresholds(config),
        Command::Simulate(args) => simulate(args),
        Command::Sweep(args) => sweep(args),
        Command::EstimateCstar { extent, cells, samples, seed } => estimate_cstar(extent, cells, *samples, *seed),
    }
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    init_logging(cli.verbose);
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Diverged(msg)) => {
            eprintln!("diverged: {msg}");
            ExitCode::from(3)
        }
    }
}
