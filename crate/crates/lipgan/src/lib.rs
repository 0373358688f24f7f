//! File formats, report writers and the `lipgan` command line on top of
//! `lipgan-core`.

pub mod cli;
pub mod config;
pub mod dist_io;
pub mod output;
pub mod suites;
