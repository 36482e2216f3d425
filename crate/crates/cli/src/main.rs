//! `riskcmdp`: solve, sweep, plot and verify risk-sensitive constrained MDPs.
//!
//! Exit codes: 0 success, 1 configuration or I/O error, 2 no feasible
//! policy found, 3 verification failure.

mod output;
mod verify;

use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde::Serialize;

use riskcmdp::config::{ConfigDocument, ConfigError};
use riskcmdp::grc::{run_grc_multi, GrcError, RestartCounts};
use riskcmdp::raster::{raster_points, stationarity_onset, STATIONARITY_TOL};
use riskcmdp::sweep::{normalized_value, sweep, SweepAxis};
use riskcmdp::{CostKind, GrcConfig, Policy, RestartMode};

use output::{OutDir, RunManifest};

#[derive(Parser)]
#[command(name = "riskcmdp", version, about = "Risk-sensitive constrained MDP solver")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct SolverArgs {
    /// Instance document (JSON).
    #[arg(long)]
    config: PathBuf,
    /// First seed; defaults to the document's solver seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Number of independent runs, seeded consecutively.
    #[arg(long, default_value_t = 1)]
    seeds: u64,
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long)]
    restart_mode: Option<RestartMode>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Run the solver and write the best policy, its trace and values.
    Solve(SolverArgs),
    /// Solve over a list of horizons or risk factors.
    Sweep {
        #[command(flatten)]
        solver: SolverArgs,
        /// `T` or `gamma`.
        #[arg(long)]
        axis: SweepAxis,
        /// Strictly increasing, comma separated.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
    },
    /// Plot data and stationarity onset of a policy file.
    Raster {
        #[arg(long)]
        policy: PathBuf,
        #[arg(long, default_value_t = STATIONARITY_TOL)]
        tol: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check the evaluators and the solver against brute-force oracles.
    Verify {
        #[arg(long, value_enum, default_value_t = verify::Scale::Small)]
        scale: verify::Scale,
        /// Also validate this document and check it against path enumeration.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug)]
enum CliError {
    Config(PathBuf, ConfigError),
    Io(std::io::Error),
    Invalid(String),
    Infeasible,
    Verification,
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            Self::Config(..) | Self::Io(_) | Self::Invalid(_) => 1,
            Self::Infeasible => 2,
            Self::Verification => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Config(path, e) => write!(f, "{}: {e}", path.display()),
            Self::Io(e) => write!(f, "{e}"),
            Self::Invalid(msg) => f.write_str(msg),
            Self::Infeasible => f.write_str("no feasible policy found"),
            Self::Verification => f.write_str("verification failed"),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::Io(e)
    }
}

impl From<GrcError> for CliError {
    fn from(e: GrcError) -> Self {
        Self::Invalid(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}

fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Solve(args) => solve(&args),
        Command::Sweep { solver, axis, values } => run_sweep(&solver, axis, &values),
        Command::Raster { policy, tol, out } => raster(&policy, tol, &out),
        Command::Verify { scale, config, out } => run_verify(scale, config.as_deref(), &out),
    }
}

fn load(path: &Path) -> Result<ConfigDocument, CliError> {
    ConfigDocument::load(path).map_err(|e| CliError::Config(path.to_path_buf(), e))
}

fn solver_setup(args: &SolverArgs, doc: &ConfigDocument) -> (GrcConfig, Vec<u64>) {
    let mut cfg = doc.solver();
    if let Some(k) = args.iters {
        cfg.max_iters = k;
    }
    if let Some(mode) = args.restart_mode {
        cfg.restart_mode = mode;
    }
    let first = args.seed.unwrap_or(cfg.seed);
    let seeds = (0..args.seeds.max(1)).map(|i| first + i).collect();
    (cfg, seeds)
}

#[derive(Serialize)]
struct SolveResult {
    feasible: bool,
    j_r: Option<f64>,
    j_c: Option<f64>,
    v_r: Option<f64>,
    v_c: Option<f64>,
    /// `log(B) / gamma_c`; absent when unconstrained.
    normalized_bound: Option<f64>,
    residual: Option<f64>,
    seed: Option<u64>,
    found_at: Option<usize>,
    iterations: usize,
    restarts: RestartCounts,
}

fn solve(args: &SolverArgs) -> Result<(), CliError> {
    let start = Instant::now();
    let doc = load(&args.config)?;
    let inst = doc.build().map_err(|e| CliError::Config(args.config.clone(), e))?;
    let (cfg, seeds) = solver_setup(args, &doc);
    let (runs, best) = run_grc_multi(&inst, &cfg, &seeds)?;

    let mut out = OutDir::create(&args.out)?;
    let trace: Vec<Vec<String>> = runs.iter().flat_map(|r| output::trace_rows(r.seed, &r.trace)).collect();
    out.csv("trace.csv", "trace", &output::TRACE_HEADER, &trace)?;

    let bound = inst.bound();
    let normalized_bound = bound
        .is_finite()
        .then(|| bound.ln() / inst.cost_spec(CostKind::Constraint).gamma);
    let chosen = best.map(|i| &runs[i]);
    let incumbent = chosen.and_then(|r| r.best.as_ref());
    let result = SolveResult {
        feasible: incumbent.is_some(),
        j_r: incumbent.map(|b| b.reward_value),
        j_c: incumbent.map(|b| b.constraint_value),
        v_r: incumbent.map(|b| normalized_value(&inst, CostKind::Reward, b.reward_value)),
        v_c: incumbent.map(|b| normalized_value(&inst, CostKind::Constraint, b.constraint_value)),
        normalized_bound,
        residual: chosen.and_then(|r| r.residual),
        seed: chosen.map(|r| r.seed),
        found_at: incumbent.map(|b| b.found_at),
        iterations: runs.iter().map(|r| r.iterations).sum(),
        restarts: runs.iter().fold(RestartCounts::default(), |acc, r| RestartCounts {
            scheduled: acc.scheduled + r.restarts.scheduled,
            infeasible_program: acc.infeasible_program + r.restarts.infeasible_program,
            infeasible_policy: acc.infeasible_policy + r.restarts.infeasible_policy,
        }),
    };
    if let Some(inc) = incumbent {
        out.json("policy.json", "policy", &inc.policy)?;
        out.csv("raster.csv", "raster", &output::RASTER_HEADER, &output::raster_rows(&raster_points(&inc.policy)))?;
    }
    out.json("result.json", "result", &result)?;
    match (result.v_r, result.v_c) {
        (Some(v_r), Some(v_c)) => println!("v_r = {v_r:.6}  v_c = {v_c:.6}  (seed {})", result.seed.unwrap_or_default()),
        _ => println!("no feasible policy in {} iterations", result.iterations),
    }
    out.finish(|artifacts| RunManifest {
        command: "solve",
        config: Some(args.config.clone()),
        policy: None,
        seeds,
        out_dir: args.out.clone(),
        artifacts,
        seconds: start.elapsed().as_secs_f64(),
    })?;
    if result.feasible {
        Ok(())
    } else {
        Err(CliError::Infeasible)
    }
}

fn run_sweep(args: &SolverArgs, axis: SweepAxis, values: &[f64]) -> Result<(), CliError> {
    let start = Instant::now();
    let doc = load(&args.config)?;
    let (cfg, seeds) = solver_setup(args, &doc);
    let rows = sweep(&doc, axis, values, &cfg, &seeds).map_err(|e| CliError::Invalid(e.to_string()))?;
    for row in &rows {
        match (&row.error, row.v_r, row.v_c) {
            (Some(e), ..) => eprintln!("{axis} = {}: {e}", row.axis_value),
            (None, Some(v_r), Some(v_c)) => println!("{axis} = {}: v_r = {v_r:.6}  v_c = {v_c:.6}", row.axis_value),
            _ => {}
        }
    }
    let mut out = OutDir::create(&args.out)?;
    out.csv("sweep.csv", "sweep", &output::SWEEP_HEADER, &output::sweep_rows(&rows))?;
    out.finish(|artifacts| RunManifest {
        command: "sweep",
        config: Some(args.config.clone()),
        policy: None,
        seeds,
        out_dir: args.out.clone(),
        artifacts,
        seconds: start.elapsed().as_secs_f64(),
    })?;
    if rows.iter().any(|r| r.feasible) {
        Ok(())
    } else {
        Err(CliError::Infeasible)
    }
}

#[derive(Serialize)]
struct Stationarity {
    onset: usize,
    tol: f64,
    decision_epochs: usize,
}

fn raster(policy_path: &Path, tol: f64, out_dir: &Path) -> Result<(), CliError> {
    let start = Instant::now();
    let text = std::fs::read_to_string(policy_path)?;
    let policy: Policy = serde_json::from_str(&text)
        .map_err(|e| CliError::Invalid(format!("{}: malformed policy: {e}", policy_path.display())))?;
    if policy.decision_epochs() == 0 {
        return Err(CliError::Invalid(format!("{}: policy has no decision epochs", policy_path.display())));
    }
    let report = Stationarity {
        onset: stationarity_onset(&policy, tol),
        tol,
        decision_epochs: policy.decision_epochs(),
    };
    let mut out = OutDir::create(out_dir)?;
    out.csv("raster.csv", "raster", &output::RASTER_HEADER, &output::raster_rows(&raster_points(&policy)))?;
    out.json("stationarity.json", "stationarity", &report)?;
    println!("stationary from epoch {} of {}", report.onset, report.decision_epochs);
    out.finish(|artifacts| RunManifest {
        command: "raster",
        config: None,
        policy: Some(policy_path.to_path_buf()),
        seeds: Vec::new(),
        out_dir: out_dir.to_path_buf(),
        artifacts,
        seconds: start.elapsed().as_secs_f64(),
    })?;
    Ok(())
}

fn run_verify(scale: verify::Scale, config: Option<&Path>, out_dir: &Path) -> Result<(), CliError> {
    let start = Instant::now();
    let extra = match config {
        Some(path) => Some(load(path)?.build().map_err(|e| CliError::Config(path.to_path_buf(), e))?),
        None => None,
    };
    let report = verify::run(scale, extra.as_ref());
    for c in &report.checks {
        let verdict = if c.passed { "PASS" } else { "FAIL" };
        println!("{verdict} {:<26} max deviation {:.2e} (tolerance {:.0e}, {} cases)", c.name, c.max_deviation, c.tolerance, c.cases);
    }
    let mut out = OutDir::create(out_dir)?;
    out.json("verify.json", "verify", &report)?;
    out.finish(|artifacts| RunManifest {
        command: "verify",
        config: config.map(Path::to_path_buf),
        policy: None,
        seeds: Vec::new(),
        out_dir: out_dir.to_path_buf(),
        artifacts,
        seconds: start.elapsed().as_secs_f64(),
    })?;
    if report.passed {
        Ok(())
    } else {
        Err(CliError::Verification)
    }
}
