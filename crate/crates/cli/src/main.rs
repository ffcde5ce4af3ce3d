//! `flatvp` command-line driver.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "flatvp", version, about = "Flat Vlasov-Poisson steady states and their stability")]
struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory, created if missing.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Worker threads; defaults to the number of cores.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// RNG seed, overriding the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check the assumptions on Q for the configured model.
    Validate,
    /// Solve for the steady state of the configured mass.
    Solve,
    /// Scaling laws and the mass-scaling inequality.
    Scaling,
    /// Interior/exterior splitting diagnostic.
    Split,
    /// Particle simulation started from the steady state.
    Evolve,
    /// Potential of a tabulated density.
    PotentialTable {
        /// Two-column `r,rho` CSV, overriding the config.
        #[arg(long)]
        input: Option<PathBuf>,
    },
}

#[derive(Debug)]
pub enum CliError {
    /// Bad usage or configuration, exit code 2.
    Usage(String),
    /// Numerical failure or failed check, exit code 1.
    Failed(String),
}

impl From<flatvp::Error> for CliError {
    fn from(e: flatvp::Error) -> Self {
        use flatvp::Error as E;
        match e {
            E::Input(_) | E::Parse(_) | E::Io(_) | E::ModelDefinition(_) => CliError::Usage(e.to_string()),
            _ => CliError::Failed(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Usage(format!("i/o: {e}"))
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(CliError::Failed(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(CliError::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<bool, CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(format!("thread pool: {e}")))?;
    }
    let ctx = commands::Context::load(cli.config.as_deref(), &cli.out, cli.seed)?;
    match cli.command {
        Command::Validate => commands::validate(&ctx),
        Command::Solve => commands::solve(&ctx),
        Command::Scaling => commands::scaling(&ctx),
        Command::Split => commands::split(&ctx),
        Command::Evolve => commands::evolve(&ctx),
        Command::PotentialTable { input } => commands::potential_table(&ctx, input),
    }
}
