//! Experiment harness around `msa-core`: dataset generation, single runs,
//! the toy sample-size sweep, the lower-bound simulation and discrepancy
//! estimation. Every command reads a flat [`config::ExperimentConfig`].

pub mod config;
pub mod disc;
pub mod error;
pub mod gen;
pub mod lowerbound;
pub mod run;
pub mod table1;

pub use config::ExperimentConfig;
pub use error::{CliError, Result};

/// Caps the global rayon pool at `MSA_THREADS` threads when the variable is set.
pub fn init_threads() -> Result<()> {
    let Ok(raw) = std::env::var("MSA_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|n| *n >= 1)
        .ok_or_else(|| CliError::Config(format!("MSA_THREADS must be a positive integer, got `{raw}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Config(format!("cannot size thread pool: {e}")))
}
