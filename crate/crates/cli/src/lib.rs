//! `mter` command-line pipeline: preprocess, train, recommend, explain,
//! evaluate and permtest, plus directory checkpoints.

pub mod checkpoint;
pub mod commands;
pub mod config;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CheckpointError, Manifest};
pub use commands::{run, Cli, Command};
pub use config::RunConfig;
