//! Configuration, stages and reports of the command-line runner.

pub mod config;
pub mod pipeline;
