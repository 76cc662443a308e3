//! File formats, experiment configuration and the `pld` command-line
//! workflows built on top of `pld-core`.

pub mod commands;
pub mod config;
pub mod io;
