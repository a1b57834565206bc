//! File formats, completion backends, the experiment runner and the CLI
//! around `tsprompt-core`.

pub mod check;
pub mod cli;
pub mod embed;
pub mod error;
pub mod experiment;
pub mod fixtures;
pub mod formats;
pub mod llm;

pub use error::{Error, Result};
