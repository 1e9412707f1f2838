//! `qcls`: command-line front end for the quadratically constrained
//! least-squares solver.
//!
//! Exit codes: 0 success, 1 parse or usage error, 2 infeasible constraint,
//! 3 internal solver failure, 4 command not applicable to the problem.

mod curve;
mod file;
mod report;
mod sweep;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use qcls_core::oracle::{brute_force_min, OracleConfig};
use qcls_core::{solve, ProblemSpec, Sense, SolveError, SolveReport, SolverConfig};
use thiserror::Error;

use crate::curve::Grid;
use crate::file::{ConfigOverrides, ProblemFile};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("invalid problem: {0}")]
    Invalid(String),
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Solve(SolveError),
    #[error("not applicable: {0}")]
    NotApplicable(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Parse { .. } | CliError::Invalid(_) | CliError::Usage(_) => 1,
            CliError::Solve(SolveError::Infeasible { .. }) => 2,
            CliError::Solve(
                SolveError::DimensionMismatch { .. }
                | SolveError::InvalidConfig { .. }
                | SolveError::ZeroObjective
                | SolveError::NonConvexObjective { .. },
            ) => 1,
            CliError::Solve(_) => 3,
            CliError::NotApplicable(_) => 4,
        }
    }

    /// Machine-readable tag printed with every error.
    pub fn code(&self) -> &'static str {
        match self {
            CliError::Parse { .. } => "parse",
            CliError::Invalid(_) => "invalid-problem",
            CliError::Usage(_) => "usage",
            CliError::Solve(e) => match e {
                SolveError::Infeasible { .. } => "infeasible",
                SolveError::DimensionMismatch { .. } => "dimension-mismatch",
                SolveError::InvalidConfig { .. } => "invalid-config",
                SolveError::ZeroObjective => "zero-objective",
                SolveError::NonConvexObjective { .. } => "non-convex-objective",
                SolveError::PoleProximity { .. } => "pole-proximity",
                SolveError::BracketFailure { .. } => "bracket-failure",
                SolveError::NoPositiveEigenvalue => "no-positive-eigenvalue",
                SolveError::SingularTransform { .. } => "singular-transform",
                SolveError::NotAttained => "not-attained",
                _ => "internal",
            },
            CliError::NotApplicable(_) => "not-applicable",
        }
    }
}

impl From<SolveError> for CliError {
    fn from(e: SolveError) -> Self {
        CliError::Solve(e)
    }
}

#[derive(Parser, Debug)]
#[command(name = "qcls", version, about = "Global minimisation of a convex quadratic under one quadratic constraint")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Default)]
struct TolArgs {
    /// Solver setting override, e.g. `--tol tol_class=1e-8` (repeatable).
    #[arg(long = "tol", value_name = "NAME=VALUE")]
    tol: Vec<String>,
}

impl TolArgs {
    fn overrides(&self) -> Result<ConfigOverrides, CliError> {
        let mut o = ConfigOverrides::default();
        for item in &self.tol {
            let (name, value) = item
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("--tol expects NAME=VALUE, got '{item}'")))?;
            let v: f64 = value
                .trim()
                .parse()
                .map_err(|_| CliError::Usage(format!("--tol {name}: '{value}' is not a number")))?;
            o.set(name.trim(), v)?;
        }
        Ok(o)
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve a problem file and print the report.
    Solve {
        file: PathBuf,
        /// Treat the constraint as `<= 0` regardless of the file.
        #[arg(long)]
        ineq: bool,
        /// Emit JSON instead of text.
        #[arg(long, conflicts_with = "text")]
        json: bool,
        /// Emit text (the default).
        #[arg(long)]
        text: bool,
        /// Number of solution samples (defaults to the solver setting).
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        tol: TolArgs,
    },
    /// Export the secular function `f(lambda)` as CSV.
    Secular {
        file: PathBuf,
        /// `lo:hi:steps`, with `steps` grid points.
        #[arg(long, allow_hyphen_values = true)]
        grid: String,
        /// Output file; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        tol: TolArgs,
    },
    /// Solve along a one-parameter family and write one CSV row per step.
    Sweep {
        file: PathBuf,
        /// `k`, `kappa`, `A[i,j]`, `B[i,j]`, `t[i]` or `b[i]`, optionally with `+c` or `:inv2`.
        #[arg(long)]
        param: String,
        /// `a:b`
        #[arg(long, allow_hyphen_values = true)]
        range: String,
        #[arg(long)]
        steps: usize,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        tol: TolArgs,
    },
    /// Brute-force grid search (n <= 3).
    Oracle {
        file: PathBuf,
        #[arg(long)]
        ineq: bool,
        /// Grid points per axis.
        #[arg(long, default_value_t = 201)]
        resolution: usize,
        /// Half-width of the search box.
        #[arg(long = "box", default_value_t = 10.0)]
        half_width: f64,
        #[arg(long)]
        json: bool,
    },
    /// Print the JSON schema of problem files.
    Schema,
}

fn load(path: &Path, ineq: bool) -> Result<(ProblemFile, ProblemSpec), CliError> {
    let file = ProblemFile::read(path)?;
    let mut p = file.problem()?;
    if ineq {
        p = p.with_sense(Sense::LessEqual);
    }
    Ok((file, p))
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), CliError> {
    match out {
        Some(path) => std::fs::write(path, text).map_err(|e| CliError::Usage(format!("cannot write {}: {e}", path.display()))),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .map_err(|e| CliError::Usage(format!("cannot write output: {e}")))
        }
    }
}

fn solve_report(p: &ProblemSpec, cfg: &SolverConfig) -> Result<SolveReport, CliError> {
    Ok(solve(p, cfg)?)
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Solve {
            file,
            ineq,
            json,
            text: _,
            samples,
            seed,
            tol,
        } => {
            let (f, p) = load(&file, ineq)?;
            let cfg = f.solver_config(&tol.overrides()?);
            let rep = solve_report(&p, &cfg)?;
            let count = samples.unwrap_or(cfg.default_samples);
            let pts = if rep.attained() { rep.sample(count, seed, cfg.free_spread)? } else { Vec::new() };
            let body = if json {
                let mut s = serde_json::to_string_pretty(&report::to_json(&rep, &pts)).expect("report serializes");
                s.push('\n');
                s
            } else {
                report::to_text(&rep, &pts)
            };
            emit(None, &body)
        }
        Command::Secular { file, grid, out, tol } => {
            let grid = Grid::parse(&grid)?;
            let (f, p) = load(&file, false)?;
            let cfg = f.solver_config(&tol.overrides()?);
            let rep = solve_report(&p, &cfg)?;
            emit(out.as_deref(), &curve::secular_csv(&rep, &grid, &cfg)?)
        }
        Command::Sweep {
            file,
            param,
            range,
            steps,
            out,
            tol,
        } => {
            let (lo, hi) = range
                .split_once(':')
                .ok_or_else(|| CliError::Usage(format!("range '{range}' is not a:b")))?;
            let grid = Grid::parse(&format!("{lo}:{hi}:{steps}"))?;
            let f = ProblemFile::read(&file)?;
            let param = sweep::Param::parse(&param, f.dim())?;
            let cfg = f.solver_config(&tol.overrides()?);
            emit(out.as_deref(), &sweep::sweep_csv(&f, &param, &grid, &cfg))
        }
        Command::Oracle {
            file,
            ineq,
            resolution,
            half_width,
            json,
        } => {
            let (_, p) = load(&file, ineq)?;
            let cfg = OracleConfig::default().with_box(half_width).with_resolution(resolution);
            let r = brute_force_min(&p, &cfg).map_err(|e| match e {
                qcls_core::oracle::OracleError::NoFeasiblePoints => CliError::NotApplicable(e.to_string()),
                _ => CliError::Usage(e.to_string()),
            })?;
            let body = if json {
                let v = serde_json::json!({
                    "approx_infimum": report::num(r.approx_infimum),
                    "best_points": r.best_points.iter().map(report::vector).collect::<Vec<_>>(),
                    "accepted": r.accepted.len(),
                    "resolution": r.resolution,
                    "cell": report::num(r.cell),
                });
                format!("{}\n", serde_json::to_string_pretty(&v).expect("oracle result serializes"))
            } else {
                let mut s = format!("L ~ {}\naccepted grid points = {}\ncell = {}\nminimizers:\n", r.approx_infimum, r.accepted.len(), r.cell);
                for x in &r.best_points {
                    s.push_str(&format!("  {}\n", report::fmt_vec(x)));
                }
                s
            };
            emit(None, &body)
        }
        Command::Schema => {
            let s = serde_json::to_string_pretty(&file::schema()).expect("schema serializes");
            emit(None, &format!("{s}\n"))
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.code());
            ExitCode::from(e.exit_code())
        }
    }
}
