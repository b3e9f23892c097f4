//! File formats, checkpoints, reports and the command-line driver built on
//! [`ctp_core`].

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod error;
pub mod formats;
pub mod report;
pub mod timing;

pub use error::{CtpError, Result};
