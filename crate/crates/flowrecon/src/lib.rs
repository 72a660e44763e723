//! Command-line front end for `flowrecon-core`: voxel grid file formats,
//! file-to-file pipeline stages and convergence-rate studies.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod error;
pub mod io;
pub mod stages;
pub mod study;

pub use config::Config;
pub use error::{AppError, Result};
