//! Data loading, experiment configuration and the seeded experiment driver.

mod chain_io;
mod config;
mod data;
mod run;

pub use chain_io::{parse_chain_csv, read_chain_csv, write_chains_csv};
pub use config::{
    Experiment, ExperimentConfig, ExpSlDemoSpec, FitMethod, FitSpec, LgssmOracleSpec, LyapunovSpec, McmcBudget,
    Preset, RickerScalingSpec, VoleCompareSpec, EXPERIMENT_KINDS, SCHEMA_VERSION,
};
pub use data::{load_voles_csv, parse_voles_csv, tenfold_count, ObservedSeries, Season};
pub use run::{rerun_from_manifest, run_experiment, Artifact, Manifest, RunStatus, SeedRecord, TOOL_NAME};
