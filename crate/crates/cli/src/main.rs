//! Command-line front end for the spectral density experiments.
//!
//! Exit codes: 0 success, 2 usage/config error, 3 numerical failure,
//! 4 I/O error.

mod commands;
mod config;

use clap::{Parser, Subcommand};

use config::CommonArgs;

#[derive(Parser)]
#[command(name = "spectra-kde", version, about = "Kernel spectral density estimation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Kernel density curve of one sampled covariance matrix, plus the
    /// limit-law curve when the population has a known limit.
    Density(CommonArgs),
    /// Monte-Carlo mean-square-error table across replicates.
    Mse(CommonArgs),
    /// Recover population-spectrum moments from one sampled matrix.
    Recover(CommonArgs),
    /// MMSE-SIR functional: kernel estimate and limit value.
    Sir(CommonArgs),
    /// Kolmogorov-distance decay across sample sizes.
    Rate(CommonArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Density(_) => "density",
            Command::Mse(_) => "mse",
            Command::Recover(_) => "recover",
            Command::Sir(_) => "sir",
            Command::Rate(_) => "rate",
        }
    }

    fn args(&self) -> &CommonArgs {
        match self {
            Command::Density(a)
            | Command::Mse(a)
            | Command::Recover(a)
            | Command::Sir(a)
            | Command::Rate(a) => a,
        }
    }
}

const EXIT_USAGE: i32 = 2;
const EXIT_NUMERICAL: i32 = 3;
const EXIT_IO: i32 = 4;

fn exit_code(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if let Some(lib) = cause.downcast_ref::<spectra_kde::Error>() {
            return match lib {
                spectra_kde::Error::InvalidInput(_)
                | spectra_kde::Error::DimensionMismatch(_) => EXIT_USAGE,
                _ => EXIT_NUMERICAL,
            };
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return EXIT_IO;
        }
    }
    EXIT_USAGE
}

/// SPECTRA_KDE_THREADS caps worker threads for replicate-level parallelism.
fn init_thread_pool() {
    if let Ok(raw) = std::env::var("SPECTRA_KDE_THREADS") {
        if let Ok(threads) = raw.parse::<usize>() {
            if threads >= 1 {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
            }
        }
    }
}

fn main() {
    let cli = Cli::parse();
    init_thread_pool();
    let command = cli.command.name();
    let result = config::resolve(cli.command.args())
        .and_then(|resolved| commands::run_command(command, &resolved));
    if let Err(err) = result {
        eprintln!("error: {err:#}");
        std::process::exit(exit_code(&err));
    }
}
