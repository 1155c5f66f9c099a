//! Experiment configuration, orchestration and persistence.

mod artifacts;
mod config;
mod experiments;
mod report;

pub use artifacts::{embeddings_csv, labels_csv, projection_csv, values_csv, Checkpoint};
pub use config::{ControllerSettings, ExperimentConfig, GcnSettings, Seeds, SizeStudy};
pub use experiments::{
    blocked_mazes, run_experiment, run_experiment_1, run_experiment_2, run_experiment_3, run_experiment_4,
    run_experiment_5, slot_seed, BlockedMaze, SEED_STRIDE,
};
pub use report::{EmbeddingAnalysis, EvalEntry, EvalGroup, RunReport, REPORT_SCHEMA};
