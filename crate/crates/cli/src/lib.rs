//! Library side of the `nhtopo` command-line tool.

pub mod commands;
pub mod config;
pub mod output;
