//! Command-line driver for simulating, summarizing and fitting piecewise
//! diffusion Markov processes with the `pdifmp` crate.

pub mod commands;
pub mod config;
pub mod io;

pub use commands::{cmd_ergodic, cmd_infer, cmd_simulate, cmd_summarize, resolve_config, InferStatus};
pub use config::{preset, RunConfig, PRESETS};
