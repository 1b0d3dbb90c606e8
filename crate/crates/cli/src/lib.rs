//! Benchmark harness over the llmdr engine: batch episode runs, hyperparameter
//! sweeps and replay validation.

pub mod batch;
pub mod taskgen;
pub mod validate;

pub use batch::{
    aggregate_sr_el, load_map, run_batch, sweep_hyperparams, write_csv, write_json, BatchError,
    BatchOutput, BatchSpec, EpisodeRecord, ResultRow, CSV_COLUMNS,
};
pub use taskgen::{derive_seed, random_tasks, TaskGenError};
pub use validate::{validate_replay, validate_replay_file, ReplayViolation};
