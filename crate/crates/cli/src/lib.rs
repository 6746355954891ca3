//! Experiment driver: configuration, file formats and the `fsfd` subcommands.

pub mod bench;
pub mod commands;
pub mod config;
pub mod io;
pub mod manifest;
pub mod verify;

use std::path::PathBuf;

use thiserror::Error;

pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_VERIFICATION: i32 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {message}")]
    Config { path: String, message: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error("{}{}", .0, hint_suffix(.0))]
    Core(#[from] fsfd_core::Error),
    #[error("verification failed: {}", .0.join(", "))]
    Verification(Vec<String>),
}

fn hint_suffix(e: &fsfd_core::Error) -> &'static str {
    use fsfd_core::Error as E;
    match e {
        E::Data(_) | E::Size(_) => " (hint: lengthen the training record or reduce s)",
        E::Conditioning(_) => " (hint: increase ridge or the input excitation)",
        E::Degenerate(_) => " (hint: the input is not persistently exciting; raise input_std)",
        E::EmptyKernel(_) => " (hint: s must exceed the observability index)",
        _ => "",
    }
}

impl CliError {
    pub fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self::Config { path: path.into(), message: message.into() }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Core(e) if e.is_numerical() => EXIT_NUMERICAL,
            Self::Verification(_) => EXIT_VERIFICATION,
            _ => EXIT_VALIDATION,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

/// Worker pool capped by `FSFD_THREADS` when set.
pub fn thread_pool() -> Result<rayon::ThreadPool> {
    let threads = match std::env::var("FSFD_THREADS") {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&t| t >= 1)
            .ok_or_else(|| CliError::config("FSFD_THREADS", format!("expected a positive integer, got {v:?}")))?,
        Err(_) => 0,
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::config("FSFD_THREADS", e.to_string()))
}
