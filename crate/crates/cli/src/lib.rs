//! Batch front end for inter-view constraint propagation: file formats,
//! run configuration and the subcommands of the `interprop` binary.

pub mod artifacts;
pub mod commands;
pub mod config;
pub mod io;
pub mod selfcheck;
