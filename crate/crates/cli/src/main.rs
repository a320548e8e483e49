use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use lensdyn_cli::{
    cmd_check, cmd_compose, cmd_matrix, cmd_simulate, cmd_steady, cmd_tensor, CheckOptions, CliError,
    SimulateArgs,
};
use lensdyn_core::{load_project, ProjectFile};

/// Compose, analyse and simulate open dynamical systems.
#[derive(Parser)]
#[command(name = "lensdyn", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Wire a system along a lens and write the result as a project file.
    Compose {
        project: PathBuf,
        #[arg(long)]
        lens: String,
        #[arg(long)]
        system: String,
        /// Name of the composed system (default: <lens>_<system>).
        #[arg(long)]
        name: Option<String>,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Parallel product of two systems.
    Tensor {
        project: PathBuf,
        left: String,
        right: String,
        #[arg(long)]
        name: Option<String>,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Steady states (k = 1) or period-k orbits of a det system as CSV.
    Steady {
        project: PathBuf,
        #[arg(long)]
        system: String,
        #[arg(short, long, default_value_t = 1)]
        k: usize,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Run the law and theorem suites, plus checks on the given projects.
    Check {
        projects: Vec<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 200)]
        cases: usize,
        /// Tolerance for ODE functoriality checks.
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
        /// Skip the bundled fixtures.
        #[arg(long)]
        no_bundled: bool,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Simulate a system: RK4 for ode, a sampled path for stoch, a run for det.
    Simulate {
        project: PathBuf,
        #[arg(long)]
        system: String,
        /// Initial state, comma separated (ode).
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        init: Option<Vec<f64>>,
        /// Constant parameter values, comma separated (ode).
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        params: Vec<f64>,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        t0: f64,
        #[arg(long, allow_hyphen_values = true)]
        t1: Option<f64>,
        #[arg(long)]
        h: Option<f64>,
        /// Start state (det, stoch).
        #[arg(long)]
        start: Option<String>,
        /// Input word, comma separated (det, stoch).
        #[arg(long, value_delimiter = ',')]
        word: Vec<String>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Dump the span of a det lens on charts out of the k-cycle as a count matrix.
    Matrix {
        project: PathBuf,
        #[arg(long)]
        lens: String,
        #[arg(short, long, default_value_t = 1)]
        k: usize,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
}

fn emit(out: Option<&Path>, bytes: &[u8]) -> Result<(), CliError> {
    match out {
        Some(path) => std::fs::write(path, bytes)
            .map_err(|e| CliError::usage(format!("{}: {e}", path.display()))),
        None => {
            use std::io::Write;
            std::io::stdout()
                .write_all(bytes)
                .map_err(|e| CliError::usage(e.to_string()))
        }
    }
}

fn load(path: &Path) -> Result<ProjectFile, CliError> {
    Ok(load_project(path)?)
}

fn run(cli: Cli) -> Result<i32, CliError> {
    match cli.command {
        Command::Compose {
            project,
            lens,
            system,
            name,
            out,
        } => {
            let name = name.unwrap_or_else(|| format!("{lens}_{system}"));
            let p = cmd_compose(&load(&project)?, &lens, &system, &name)?;
            emit(out.as_deref(), p.to_json().as_bytes())?;
        }
        Command::Tensor {
            project,
            left,
            right,
            name,
            out,
        } => {
            let name = name.unwrap_or_else(|| format!("{left}_{right}"));
            let p = cmd_tensor(&load(&project)?, &left, &right, &name)?;
            emit(out.as_deref(), p.to_json().as_bytes())?;
        }
        Command::Steady { project, system, k, out } => {
            emit(out.as_deref(), &cmd_steady(&load(&project)?, &system, k)?)?;
        }
        Command::Matrix { project, lens, k, out } => {
            emit(out.as_deref(), &cmd_matrix(&load(&project)?, &lens, k)?)?;
        }
        Command::Simulate {
            project,
            system,
            init,
            params,
            t0,
            t1,
            h,
            start,
            word,
            seed,
            out,
        } => {
            let args = SimulateArgs {
                init,
                params,
                t0,
                t1,
                h,
                start,
                word,
                seed,
            };
            emit(out.as_deref(), &cmd_simulate(&load(&project)?, &system, &args)?)?;
        }
        Command::Check {
            projects,
            seed,
            cases,
            tol,
            no_bundled,
            out,
        } => {
            let files = projects
                .iter()
                .map(|p| {
                    std::fs::read_to_string(p)
                        .map(|text| (p.display().to_string(), text))
                        .map_err(|e| CliError::usage(format!("{}: {e}", p.display())))
                })
                .collect::<Result<Vec<_>, _>>()?;
            let opts = CheckOptions {
                seed,
                cases,
                tol,
                bundled: !no_bundled,
            };
            let command: Vec<String> = std::env::args().skip(1).collect();
            let report = cmd_check(command, &files, &opts)?;
            for r in &report.results {
                let status = if r.passed() { "ok" } else { "FAILED" };
                eprintln!("{status:>6}  {} ({} cases, {} failed)", r.suite, r.cases, r.failed);
                for f in &r.failures {
                    eprintln!("        {f}");
                }
            }
            emit(out.as_deref(), report.to_json().as_bytes())?;
            return Ok(report.exit_code());
        }
    }
    Ok(0)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
