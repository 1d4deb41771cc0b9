//! File formats and subcommand bodies behind the `manip` binary.
//!
//! Scenario files are JSON documents matching [`manip_core::Scenario`] or
//! [`manip_core::manipulability::PointMassScenario`]. Traces are CSV with one
//! row per control instant; summaries are JSON.

// `!(x > 0.0)` forms are used on purpose so NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod input;
pub mod output;

use std::path::PathBuf;

use manip_core::ltv::LtvError;
use manip_core::manipulability::ManipError;
use manip_core::network::NetworkError;
use manip_core::sim::SimError;
use thiserror::Error;

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const CHECK_FAILED: i32 = 1;
    pub const DIVERGENCE: i32 = 2;
    pub const SCHEMA: i32 = 3;
}

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "MANIP_OUT_DIR";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("cannot write {path}: {source}")]
    Write { path: PathBuf, source: std::io::Error },
    #[error("scenario {path}: {message}")]
    Schema { path: String, message: String },
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Manip(#[from] ManipError),
    #[error(transparent)]
    Ltv(#[from] LtvError),
    #[error(transparent)]
    Network(#[from] NetworkError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Sim(e) | CliError::Manip(ManipError::Sim(e)) => sim_code(e),
            _ => exit::SCHEMA,
        }
    }
}

fn sim_code(e: &SimError) -> i32 {
    match e {
        SimError::Scenario(_) => exit::SCHEMA,
        _ => exit::DIVERGENCE,
    }
}
