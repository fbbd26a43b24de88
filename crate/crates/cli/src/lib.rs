//! Batch front end: configuration, subcommands, and report files.
//!
//! Every subcommand reads one [`config::RunConfig`], computes through the
//! `parasob` library, and writes its outputs atomically under the resolved
//! output directory.

// `!(x > 0.0)` also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;

use std::path::PathBuf;

pub use commands::{cmd_apchar, cmd_battery, cmd_scan_k, cmd_verify, Context, Outcome};
pub use config::RunConfig;

pub const EXIT_OK: i32 = 0;
pub const EXIT_BUDGET: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_IO: i32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Core(#[from] parasob::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        use parasob::Error as E;
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Io { .. } => EXIT_IO,
            CliError::Core(e) => match e {
                E::Io(_) | E::Json(_) | E::Format(_) => EXIT_IO,
                E::ResidualGate { .. } | E::TraceGate(_) | E::Violation { .. } | E::UnderResolved(_) => EXIT_BUDGET,
                _ => EXIT_CONFIG,
            },
        }
    }
}
