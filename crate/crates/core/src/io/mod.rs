//! Frame-stack files, run configurations and CSV tables.

pub mod run_config;
pub mod stack;
pub mod tables;

pub use run_config::{AnalysisConfig, RunConfig};
pub use stack::{read_stack, write_stack, StackFile, StackHeader, StackReader, StackWriter};
