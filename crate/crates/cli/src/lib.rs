//! Command-line experiment runner: configuration, pipeline, reports.

pub mod analysis;
pub mod commands;
pub mod config;
pub mod io;
pub mod pipeline;
pub mod plotdata;
pub mod report;

use std::ffi::OsString;
use std::process::ExitCode;

use clap::Parser;

pub use config::ExperimentConfig;
pub use pipeline::run_experiment;
pub use plotdata::emit_plotdata;
pub use report::ExperimentReport;

/// Every judged check passed.
pub const EXIT_OK: u8 = 0;
/// A tolerance or acceptance check failed.
pub const EXIT_CHECK_FAILED: u8 = 1;
/// Command-line usage error (as reported by clap).
pub const EXIT_USAGE: u8 = 2;
/// I/O, configuration or numerical failure.
pub const EXIT_ERROR: u8 = 3;

/// Caps the global rayon pool at `RWRE_THREADS` workers when set.
pub fn init_threads() -> anyhow::Result<()> {
    if let Ok(v) = std::env::var("RWRE_THREADS") {
        let n: usize = v
            .trim()
            .parse()
            .map_err(|_| anyhow::anyhow!("RWRE_THREADS must be a positive integer, got {v:?}"))?;
        if n == 0 {
            anyhow::bail!("RWRE_THREADS must be positive");
        }
        // A pool may already exist when embedded; that is not an error.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

pub fn run_cli<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match commands::Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Err(e) = init_threads() {
        eprintln!("error: {e:#}");
        return ExitCode::from(EXIT_USAGE);
    }
    match commands::execute(cli) {
        Ok(true) => ExitCode::from(EXIT_OK),
        Ok(false) => ExitCode::from(EXIT_CHECK_FAILED),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}
