//! Command-line plumbing: configuration, CSV ingestion with transforms, the
//! three pipelines and their output files.
//!
//! Outputs are pure functions of the input bytes, the config and the seed;
//! wall-clock time is never written to a file.

pub mod commands;
pub mod config;
pub mod load;

pub use commands::{
    cmd_analyze, cmd_cde, cmd_simulate, effects_csv, prepare, ErrorRecord, Provenance, ResultBundle,
    SimulateOutput,
};
pub use config::{
    load_analysis_config, load_simulate_config, parse_analysis, parse_simulate, sha256_hex, AnalysisConfig,
    CdeOptions, Closed, ColumnRoles, Loaded, MediatorKindName, ModelTerms, SimulateConfig, TransformKind,
    TransformSpec,
};
pub use load::{load_dataset, parse_dataset, write_dataset_csv, LoadSummary};
