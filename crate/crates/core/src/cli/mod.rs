//! Command-line front end: `viscoflow run` and `viscoflow diagnose`.
//!
//! Exit status 0 means success, 2 a rejected configuration or input file and
//! 3 a failure during the run. On status 3 a `failure.json` with the error
//! and the last checkpoint written is left in the output directory.

pub mod config;
pub mod report;

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde::Serialize;

use crate::energy::energy;
use crate::error::Error;
use crate::flow::{checkpoint, continuation_observed, descend, minmax_sweep, RunTrace};
use crate::mesh::io::{read_raw, write_atomic, write_mesh};
use crate::mesh::Immersion;

use config::{load_config, Mode, ScenarioConfig};
use report::{run_diagnostics, write_report, write_trace, Geometry, MinmaxReport, Report, Timing, ToolInfo};

/// Environment variable holding the worker thread count.
pub const THREADS_ENV: &str = "VISCOFLOW_THREADS";

const DEFAULT_OUT_DIR: &str = "viscoflow-out";

#[derive(Debug, Parser)]
#[command(name = "viscoflow", version, about = "Relaxed-area flows and varifold diagnostics for free boundary minimal surfaces")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a scenario and write final.obj, trace.csv and report.json.
    Run {
        config: PathBuf,
        /// Output directory, overriding the scenario's `output_dir`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Seed, overriding the scenario's `seed`.
        #[arg(long)]
        seed: Option<u64>,
        /// Validate the scenario and exit without running it.
        #[arg(long)]
        check: bool,
    },
    /// Run the scenario's diagnostics on a stored OBJ or OFF mesh.
    Diagnose {
        mesh: PathBuf,
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Invalid(Error),
    #[error("numerical failure: {error}")]
    NumericalFailure { error: Error, last_checkpoint: Option<PathBuf> },
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Invalid(_) => 2,
            CliError::NumericalFailure { .. } => 3,
        }
    }
}

#[derive(Serialize)]
struct FailurePayload<'a> {
    error: String,
    exit_code: u8,
    last_checkpoint: Option<&'a Path>,
}

/// Parses `args` (program name first), runs the command and returns the exit status.
pub fn main_with_args<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    if let Err(e) = configure_threads() {
        eprintln!("error: {e}");
        return 2;
    }
    let (result, out_dir) = match cli.command {
        Command::Run { config, out, seed, check } => {
            let dir = out.clone();
            (run_command(&config, out, seed, check), dir)
        }
        Command::Diagnose { mesh, config, out } => {
            let dir = out.clone();
            (diagnose_command(&mesh, &config, out), dir)
        }
    };
    match result {
        Ok(message) => {
            println!("{message}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            if let CliError::NumericalFailure { last_checkpoint, .. } = &e {
                let dir = out_dir.unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR));
                let payload = FailurePayload {
                    error: e.to_string(),
                    exit_code: e.exit_code(),
                    last_checkpoint: last_checkpoint.as_deref(),
                };
                if dir.is_dir() {
                    if let Ok(text) = serde_json::to_string_pretty(&payload) {
                        let _ = write_atomic(&dir.join("failure.json"), text.as_bytes());
                    }
                }
            }
            e.exit_code()
        }
    }
}

fn configure_threads() -> Result<(), Error> {
    let Ok(value) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| Error::ConfigInvalid(vec![format!("{THREADS_ENV}: expected a positive integer, got '{value}'")]))?;
    #[cfg(feature = "parallel")]
    {
        // A second initialization in the same process keeps the first pool.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    #[cfg(not(feature = "parallel"))]
    let _ = n;
    Ok(())
}

fn worker_threads() -> usize {
    #[cfg(feature = "parallel")]
    {
        rayon::current_num_threads()
    }
    #[cfg(not(feature = "parallel"))]
    {
        1
    }
}

fn load_valid(path: &Path) -> Result<ScenarioConfig, CliError> {
    let cfg = load_config(path).map_err(CliError::Invalid)?;
    cfg.validate().map_err(CliError::Invalid)?;
    Ok(cfg)
}

fn output_dir(cfg: &ScenarioConfig, out: Option<PathBuf>) -> PathBuf {
    out.or_else(|| cfg.output_dir.clone()).unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)
        .map_err(|e| CliError::NumericalFailure { error: Error::Io(format!("{}: {e}", dir.display())), last_checkpoint: None })
}

/// Final state of a run with its trace and the `σ` it ended at.
pub struct RunOutcome {
    pub immersion: Immersion,
    pub trace: RunTrace,
    pub sigma: f64,
    pub minmax: Option<MinmaxReport>,
}

/// Executes the scenario's mode. Checkpoints go to `checkpoint_dir` when
/// given; the path of the last one written is kept in `last_checkpoint`.
pub fn execute(
    cfg: &ScenarioConfig,
    seed: u64,
    checkpoint_dir: Option<&Path>,
    last_checkpoint: &mut Option<PathBuf>,
) -> crate::Result<RunOutcome> {
    let opts = cfg.descent_options();
    let mut save = |name: String, imm: &Immersion, sigma: f64, step: usize| -> crate::Result<()> {
        if let Some(dir) = checkpoint_dir {
            let path = dir.join(name);
            checkpoint(&path, imm, sigma, step)?;
            *last_checkpoint = Some(path);
        }
        Ok(())
    };
    match cfg.mode {
        Mode::Descend => {
            let sigma = cfg.sigma.expect("validated");
            let start = cfg.initial_immersion(seed)?;
            save("initial.obj".into(), &start, sigma, 0)?;
            let (immersion, trace) = descend(&start, sigma, &opts)?;
            save("phase-00.obj".into(), &immersion, sigma, trace.rows.len())?;
            Ok(RunOutcome { immersion, trace, sigma, minmax: None })
        }
        Mode::Continuation => {
            let schedule = cfg.schedule.as_ref().expect("validated");
            let start = cfg.initial_immersion(seed)?;
            save("initial.obj".into(), &start, schedule.sigmas[0], 0)?;
            let (immersion, trace) = continuation_observed(&start, schedule, &opts, &mut |k, sigma, imm| {
                save(format!("phase-{k:02}.obj"), imm, sigma, k)
            })?;
            let sigma = *schedule.sigmas.last().expect("validated");
            Ok(RunOutcome { immersion, trace, sigma, minmax: None })
        }
        Mode::Minmax => {
            let sigma = cfg.sigma.expect("validated");
            let spec = cfg.sweepout.as_ref().expect("validated");
            let family = cfg.sweepout()?;
            let out = minmax_sweep(&family, sigma, spec.rounds, spec.steps_per_round, &opts)?;
            let minmax = MinmaxReport {
                beta_estimate: out.beta_estimate,
                argmax: out.argmax,
                beta_history: out.beta_history.clone(),
                slices: out.sweepout.len(),
            };
            let mut trace = out.refined_trace;
            save("minmax.obj".into(), &out.refined, sigma, trace.rows.len())?;
            let (immersion, sigma) = match &cfg.schedule {
                None => (out.refined, sigma),
                Some(schedule) => {
                    let (imm, cont) = continuation_observed(&out.refined, schedule, &opts, &mut |k, s, imm| {
                        save(format!("phase-{k:02}.obj"), imm, s, k)
                    })?;
                    trace.append(cont);
                    (imm, *schedule.sigmas.last().expect("validated"))
                }
            };
            Ok(RunOutcome { immersion, trace, sigma, minmax: Some(minmax) })
        }
    }
}

fn run_command(path: &Path, out: Option<PathBuf>, seed: Option<u64>, check: bool) -> Result<String, CliError> {
    let cfg = load_valid(path)?;
    let seed = seed.unwrap_or(cfg.seed);
    if check {
        if cfg.mode == Mode::Minmax {
            cfg.sweepout().map_err(CliError::Invalid)?;
        } else {
            cfg.initial_immersion(seed).map_err(CliError::Invalid)?;
        }
        return Ok(format!("{}: configuration is valid", path.display()));
    }
    let dir = output_dir(&cfg, out);
    create_dir(&dir)?;
    let started = Instant::now();
    let checkpoint_dir = cfg.checkpoints.then(|| dir.join("checkpoints"));
    if let Some(c) = &checkpoint_dir {
        create_dir(c)?;
    }
    let mut last = None;
    let fail = |error: Error, last: &Option<PathBuf>| CliError::NumericalFailure { error, last_checkpoint: last.clone() };
    let outcome = execute(&cfg, seed, checkpoint_dir.as_deref(), &mut last).map_err(|e| fail(e, &last))?;
    write_mesh(&dir.join("final.obj"), &outcome.immersion).map_err(|e| fail(e, &last))?;
    write_trace(&dir.join("trace.csv"), &outcome.trace).map_err(|e| fail(e, &last))?;
    let report = build_report(&cfg, seed, cfg.mode_name(), &outcome, started).map_err(|e| fail(e, &last))?;
    write_report(&dir.join("report.json"), &report).map_err(|e| fail(e, &last))?;
    Ok(format!("wrote final.obj, trace.csv and report.json to {}", dir.display()))
}

fn build_report(
    cfg: &ScenarioConfig,
    seed: u64,
    mode: &str,
    outcome: &RunOutcome,
    started: Instant,
) -> crate::Result<Report> {
    let imm = &outcome.immersion;
    let diagnostics = run_diagnostics(imm, &cfg.diagnostics)?;
    Ok(Report {
        schema_version: report::SCHEMA_VERSION,
        tool: ToolInfo::default(),
        mode: mode.to_string(),
        seed,
        scenario: ScenarioConfig { seed, ..cfg.clone() },
        sigma: outcome.sigma,
        final_energy: energy(imm, outcome.sigma)?,
        geometry: Geometry::of(imm)?,
        iterations: outcome.trace.rows.len(),
        phases: outcome.trace.phases.clone(),
        entropy_trajectory: Report::entropy_trajectory(&outcome.trace),
        entropy_violation: outcome.trace.entropy_violation,
        minmax: outcome.minmax.clone(),
        diagnostics,
        timing: Timing { wall_seconds: started.elapsed().as_secs_f64(), threads: worker_threads() },
    })
}

fn diagnose_command(mesh_path: &Path, config_path: &Path, out: Option<PathBuf>) -> Result<String, CliError> {
    let cfg = load_valid(config_path)?;
    let started = Instant::now();
    let raw = read_raw(mesh_path).map_err(|e| CliError::Invalid(located(mesh_path, e)))?;
    let q = cfg.embedding_dim();
    if raw.dim != q {
        return Err(CliError::Invalid(Error::DimensionMismatch { expected: q, got: raw.dim }));
    }
    let mesh = raw.to_surface_mesh().map_err(|e| CliError::Invalid(located(mesh_path, e)))?;
    let constraint = cfg.constraint().map_err(CliError::Invalid)?;
    let imm = Immersion::new(Arc::new(mesh), raw.positions, cfg.ambient.clone(), constraint)
        .map_err(|e| CliError::Invalid(located(mesh_path, e)))?;
    let sigma = cfg
        .sigma
        .or_else(|| cfg.schedule.as_ref().and_then(|s| s.sigmas.last().copied()))
        .unwrap_or(0.0);
    let dir = output_dir(&cfg, out);
    create_dir(&dir)?;
    let outcome = RunOutcome { immersion: imm, trace: RunTrace::default(), sigma, minmax: None };
    let fail = |error| CliError::NumericalFailure { error, last_checkpoint: None };
    let report = build_report(&cfg, cfg.seed, "diagnose", &outcome, started).map_err(fail)?;
    write_report(&dir.join("report.json"), &report).map_err(fail)?;
    Ok(format!("wrote report.json to {}", dir.display()))
}

fn located(path: &Path, e: Error) -> Error {
    match e {
        Error::Parse { line, message } => Error::Parse { line, message: format!("{}: {message}", path.display()) },
        other => other,
    }
}

impl ScenarioConfig {
    pub fn mode_name(&self) -> &'static str {
        match self.mode {
            Mode::Descend => "descend",
            Mode::Continuation => "continuation",
            Mode::Minmax => "minmax",
        }
    }
}
