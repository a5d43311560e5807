//! Scenario configuration, dataset I/O and the experiment loop.

mod config;
mod data;
mod run;

pub use config::{
    DatasetConfig, FitGrid, GridSpec, OracleConfig, RobotsConfig, ScenarioConfig, SynthConfig, TestPoints, WorkspaceConfig,
};
pub use data::{ingest_csv, summarize, synth_field, write_dataset_csv, DatasetSummary, CSV_HEADER};
pub use run::{
    box_stats, execute_first_step, export_grid, load_dataset, oracle_check, run_scenario, run_with_dataset, write_grid_csv,
    BoxStats, ConnectivityRow, ConsensusRow, GridRow, GridSnapshot, RunArtifacts, RunMeta, TrajectoryRow, UncertaintyRow,
};
