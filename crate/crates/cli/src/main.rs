use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;

use abpf_core::Error;

#[derive(Parser)]
#[command(name = "abpf", version, about = "Crowded active Brownian particle solvers and checks")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Clone, Debug)]
pub struct Common {
    /// Plain-text `key = value` config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override one key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Output directory (created if missing).
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Subcommand)]
enum Cmd {
    /// Regularize initial data and report the initial entropy budget.
    Mollify(Common),
    /// Run the conservative solver.
    RunPrimal(Common),
    /// Run the entropy-variable Galerkin solver.
    RunDual(Common),
    /// Run the planar marginal equation driven by a primal run.
    RhoDrift(Common),
    /// Tabulate linearized mode rates about a constant state.
    StationaryScan(Common),
    /// Iterate the fixed-point map about a constant state.
    FixedPoint {
        #[command(flatten)]
        common: Common,
        /// Exit with status 2 when the iteration fails to contract.
        #[arg(long)]
        strict: bool,
    },
    /// Run the acceptance suite.
    Verify {
        #[arg(long, default_value = "small")]
        size: String,
        /// Run only these criteria (1-12); repeatable.
        #[arg(long)]
        only: Vec<usize>,
    },
    /// Run the dual solver over a grid of (epsilon, K).
    Sweep(Common),
}

fn exit_code(e: &Error) -> u8 {
    if e.is_numerical() {
        2
    } else {
        1
    }
}

fn set_threads() -> Result<(), Error> {
    if let Ok(v) = std::env::var("ABPF_THREADS") {
        let n: usize = v.trim().parse().map_err(|_| Error::Config {
            key: "ABPF_THREADS".into(),
            msg: format!("expected a positive integer, got `{v}`"),
        })?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .map_err(|e| Error::Config {
                key: "ABPF_THREADS".into(),
                msg: e.to_string(),
            })?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = set_threads() {
        eprintln!("error: {e}");
        return ExitCode::from(1);
    }
    let res = match cli.cmd {
        Cmd::Mollify(c) => commands::mollify(&c),
        Cmd::RunPrimal(c) => commands::run_primal(&c),
        Cmd::RunDual(c) => commands::run_dual(&c),
        Cmd::RhoDrift(c) => commands::rho_drift(&c),
        Cmd::StationaryScan(c) => commands::stationary_scan(&c),
        Cmd::FixedPoint { common, strict } => commands::fixed_point(&common, strict),
        Cmd::Verify { size, only } => commands::verify(&size, &only),
        Cmd::Sweep(c) => commands::sweep(&c),
    };
    match res {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
