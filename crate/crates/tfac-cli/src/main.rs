//! Batch front end for the solver library: parses flags and an
//! optional flat configuration file, runs one subcommand, and writes
//! CSV artifacts.  Exit status is zero exactly when the run completed
//! and every enabled check passed.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod config;
mod run;

use config::RawConfig;

#[derive(Parser)]
#[command(name = "tfac")]
#[command(about = "Time-fractional Allen-Cahn solver: graded-mesh time stepping with mixed finite elements")]
#[command(version)]
struct Cli {
    /// Flat key = value configuration file; flags take precedence
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate one benchmark problem and record per-step diagnostics
    Solve(SolveArgs),
    /// Run a refinement study and tabulate errors and rates
    Study(StudyArgs),
    /// Check the sign and bound properties of the time-stepping kernels
    Kernels(SchemeArgs),
    /// Certify the fractional Gronwall bound on random recursions
    Gronwall(GronwallArgs),
    /// Report mesh and space entity counts
    MeshInfo(MeshArgs),
}

#[derive(Args)]
struct SolveArgs {
    /// Benchmark problem name
    #[arg(long)]
    example: Option<String>,

    /// Fractional order, in (0, 1)
    #[arg(long)]
    alpha: Option<f64>,

    /// Mesh grading exponent (default 2/alpha + 0.1)
    #[arg(long)]
    gamma: Option<f64>,

    /// Evaluation offset, in [0, 1/2) (default alpha/2)
    #[arg(long)]
    nu: Option<f64>,

    /// Interaction length, in (0, 1] (default: the example's value)
    #[arg(long)]
    kappa: Option<f64>,

    /// End time (default: the example's value)
    #[arg(long = "t-final")]
    t_final: Option<f64>,

    /// Number of time steps (default 32)
    #[arg(long = "n-steps", alias = "N")]
    n_steps: Option<usize>,

    /// Subdivisions along x (default: the h = 1/(2N) coupling)
    #[arg(long)]
    nx: Option<usize>,

    /// Subdivisions along y (default: nx)
    #[arg(long)]
    ny: Option<usize>,

    /// Element order, 0 or 1
    #[arg(long)]
    k: Option<usize>,

    /// Step-restriction safety factor, > 1
    #[arg(long)]
    delta: Option<f64>,

    /// Output base path; writes <base>.csv
    #[arg(long)]
    output: Option<String>,
}

#[derive(Args)]
struct StudyArgs {
    /// Benchmark problem name
    #[arg(long)]
    example: Option<String>,

    /// Fractional order, in (0, 1)
    #[arg(long)]
    alpha: Option<f64>,

    /// Mesh grading exponent (default 2/alpha + 0.1)
    #[arg(long)]
    gamma: Option<f64>,

    /// Evaluation offset, in [0, 1/2) (default alpha/2)
    #[arg(long)]
    nu: Option<f64>,

    /// Interaction length, in (0, 1] (default: the example's value)
    #[arg(long)]
    kappa: Option<f64>,

    /// End time (default: the example's value)
    #[arg(long = "t-final")]
    t_final: Option<f64>,

    /// Comma-separated step counts (default 8,16,32,64)
    #[arg(long = "n-list", alias = "N", value_delimiter = ',')]
    n_list: Option<Vec<usize>>,

    /// Fix the spatial subdivisions instead of the h = 1/(2N) coupling
    #[arg(long)]
    nx: Option<usize>,

    /// Element order, 0 or 1
    #[arg(long)]
    k: Option<usize>,

    /// Output base path; writes <base>.csv and <base>.md
    #[arg(long)]
    output: Option<String>,
}

#[derive(Args)]
struct SchemeArgs {
    /// Fractional order, in (0, 1)
    #[arg(long)]
    alpha: Option<f64>,

    /// Mesh grading exponent (default 2/alpha + 0.1)
    #[arg(long)]
    gamma: Option<f64>,

    /// Evaluation offset, in [0, 1/2) (default alpha/2)
    #[arg(long)]
    nu: Option<f64>,

    /// End time (default 1)
    #[arg(long = "t-final")]
    t_final: Option<f64>,

    /// Number of time steps (default 32)
    #[arg(long = "n-steps", alias = "N")]
    n_steps: Option<usize>,

    /// Output base path; writes <base>.csv
    #[arg(long)]
    output: Option<String>,
}

#[derive(Args)]
struct GronwallArgs {
    #[command(flatten)]
    scheme: SchemeArgs,

    /// Number of random instances (default 100)
    #[arg(long)]
    seeds: Option<usize>,

    /// Base random seed (default 1)
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct MeshArgs {
    /// Benchmark problem name supplying the domain (default: unit square)
    #[arg(long)]
    example: Option<String>,

    /// Subdivisions along x
    #[arg(long)]
    nx: Option<usize>,

    /// Subdivisions along y (default: nx)
    #[arg(long)]
    ny: Option<usize>,

    /// Element order, 0 or 1
    #[arg(long)]
    k: Option<usize>,

    /// Output base path; writes <base>.csv
    #[arg(long)]
    output: Option<String>,
}

impl Command {
    fn raw(self) -> RawConfig {
        match self {
            Command::Solve(a) => RawConfig {
                command: Some(String::from("solve")),
                example: a.example,
                alpha: a.alpha,
                gamma: a.gamma,
                nu: a.nu,
                kappa: a.kappa,
                t_final: a.t_final,
                n_steps: a.n_steps,
                nx: a.nx,
                ny: a.ny,
                k: a.k,
                delta: a.delta,
                output: a.output,
                ..RawConfig::default()
            },
            Command::Study(a) => RawConfig {
                command: Some(String::from("study")),
                example: a.example,
                alpha: a.alpha,
                gamma: a.gamma,
                nu: a.nu,
                kappa: a.kappa,
                t_final: a.t_final,
                n_list: a.n_list,
                nx: a.nx,
                k: a.k,
                output: a.output,
                ..RawConfig::default()
            },
            Command::Kernels(a) => a.raw("kernels"),
            Command::Gronwall(a) => RawConfig {
                seeds: a.seeds,
                seed: a.seed,
                ..a.scheme.raw("gronwall")
            },
            Command::MeshInfo(a) => RawConfig {
                command: Some(String::from("mesh-info")),
                example: a.example,
                nx: a.nx,
                ny: a.ny,
                k: a.k,
                output: a.output,
                ..RawConfig::default()
            },
        }
    }
}

impl SchemeArgs {
    fn raw(self, command: &str) -> RawConfig {
        RawConfig {
            command: Some(String::from(command)),
            alpha: self.alpha,
            gamma: self.gamma,
            nu: self.nu,
            t_final: self.t_final,
            n_steps: self.n_steps,
            output: self.output,
            ..RawConfig::default()
        }
    }
}

fn run_cli(cli: Cli) -> tfac_core::error::Result<Vec<String>> {
    let from_flags = match cli.command {
        Some(c) => c.raw(),
        None => RawConfig::default(),
    };
    let from_file = match &cli.config {
        Some(path) => config::parse_file(path)?,
        None => RawConfig::default(),
    };
    let cfg = config::resolve(from_flags.or(from_file))?;
    run::execute(&cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run_cli(cli) {
        Ok(failures) if failures.is_empty() => ExitCode::SUCCESS,
        Ok(failures) => {
            for f in &failures {
                eprintln!("check failed: {f}");
            }
            eprintln!("{} check(s) failed", failures.len());
            ExitCode::FAILURE
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
