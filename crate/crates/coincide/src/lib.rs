//! File formats, configuration and runners for `coincide-core`.
//!
//! A problem is described by a TOML file ([`config`]) whose coefficient and
//! forcing entries may be numbers or expressions in the position and state
//! variables ([`expr`]). Nonlinearities are looked up by name in a
//! [`registry::ForcingRegistry`]. The [`run`] module drives the three analysis
//! commands and produces a [`report::RunReport`]; computed fields are written
//! as CSV ([`field_io`]).

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod expr;
pub mod field_io;
pub mod registry;
pub mod report;
pub mod run;

pub use config::{parse_config, parse_config_with, read_config, ProblemConfig};
pub use error::{IoError, IoResult};
pub use registry::ForcingRegistry;
pub use report::{CheckStatus, RunReport};
pub use run::{ExitStatus, RunOptions, RunOutcome};
