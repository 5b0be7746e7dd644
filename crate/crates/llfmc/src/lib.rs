//! IO, graph construction, experiment drivers and the `llfmc` command line
//! on top of [`llfmc_core`].

pub mod cli;
pub mod config_file;
pub mod distances;
pub mod error;
pub mod io;
pub mod manifest;
pub mod pipeline;
pub mod sweep;
pub mod synth;
pub mod trace;

pub use error::{Error, Result};
pub use llfmc_core as core;
