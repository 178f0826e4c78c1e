//! Batch harness wiring JSON study configs to the transport toolkit and
//! writing reproducible CSV/JSON reports.

pub mod config;
pub mod output;
pub mod runners;
pub mod selftest;

use clap::{Parser, Subcommand};
use std::path::PathBuf;

/// Exit codes: 0 success, 1 study verdict failure, 2 configuration error.
pub const EXIT_OK: i32 = 0;
pub const EXIT_VERDICT: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

#[derive(Parser, Debug)]
#[command(
    name = "nmot",
    about = "Particle discretizations of transport distances with nonlinear mobilities",
    version
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Parser)]
pub struct CommonArgs {
    /// Path to the JSON study configuration.
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory for CSV/JSON reports.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Worker threads for studies fanning out over particle counts.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Seed stamped into every report and feeding randomized checks.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Distance between two sampled measures at a single resolution.
    Distance(CommonArgs),
    /// Same as `distance`, plus path/endpoint dumps.
    Geodesic(CommonArgs),
    /// Distance trend over increasing particle counts.
    Gamma(CommonArgs),
    /// Minimizing-movement convergence study.
    Jko(CommonArgs),
    /// Follow-the-leader versus the exact entropy solution.
    Ftl(CommonArgs),
    /// Run the embedded invariant suite.
    Selftest {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn install_thread_pool(threads: Option<usize>) {
    if let Some(n) = threads {
        // a second invocation in-process keeps the first pool; that is fine
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

/// Parse `argv` and run the selected study. Never panics on bad input.
pub fn run_cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            // clap handles --help/--version through errors as well
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match cli.command {
        Command::Distance(args) => {
            install_thread_pool(args.threads);
            runners::run_distance(&args, false)
        }
        Command::Geodesic(args) => {
            install_thread_pool(args.threads);
            runners::run_distance(&args, true)
        }
        Command::Gamma(args) => {
            install_thread_pool(args.threads);
            runners::run_gamma(&args)
        }
        Command::Jko(args) => {
            install_thread_pool(args.threads);
            runners::run_jko(&args)
        }
        Command::Ftl(args) => {
            install_thread_pool(args.threads);
            runners::run_ftl(&args)
        }
        Command::Selftest { seed } => selftest::run(seed),
    }
}
