//! `hsdop`: command-line runner for Hodge spectral duality operators.
//!
//! Every command is deterministic given its inputs. Reports and exported files carry a SHA-256
//! hash of the effective configuration (or of the arguments, for commands without one).

pub mod commands;
pub mod config;
pub mod error;

pub use config::{load_complex, Overrides, RunConfig, CONFIG_VERSION};
pub use error::{CliError, CliResult};

/// Environment variable capping worker threads.
pub const THREADS_VAR: &str = "HSDOP_THREADS";

/// Worker cap from [`THREADS_VAR`]; `None` when unset.
///
/// All numerical work runs on the calling thread, so any cap of one or more is satisfied and
/// results never depend on it. A value that is not a positive integer is a usage error.
pub fn thread_cap() -> CliResult<Option<usize>> {
    match std::env::var(THREADS_VAR) {
        Err(_) => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(CliError::Usage(format!("{THREADS_VAR} must be a positive integer, got '{v}'"))),
        },
    }
}
