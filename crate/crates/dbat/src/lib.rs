//! Std companion of `dbat-core`: config files, run manifests, CSV exports,
//! model and IDX files, the experiments and the `dbat` command line.

pub mod cli;
pub mod config;
pub mod error;
pub mod experiments;
pub mod io;
pub mod manifest;
pub mod runner;

pub use error::{Result, RunError};
