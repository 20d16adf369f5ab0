//! Experiment front end: configuration, presets, batch commands and
//! deterministic tabular output.

pub mod alloc;
pub mod commands;
pub mod config;
pub mod output;
pub mod presets;

pub use commands::{
    benchmark_table, cmd_benchmark, cmd_explore, cmd_multinode, cmd_solve, cmd_sweep, multinode_table, solve_table,
    BenchmarkRecord, MultinodeRow, SolveResult,
};
pub use config::ExperimentConfig;
pub use output::Table;
