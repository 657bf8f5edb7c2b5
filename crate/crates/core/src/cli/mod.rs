//! Config-driven experiment runner behind the `fedleak` binary.
//!
//! A run writes its CSV artifacts, a `metrics.csv` summary and a
//! `manifest.txt` listing every artifact with its SHA-256.

mod config;
mod run;

pub use config::{
    load_config, parse_config, AttackSection, DataConfig, DataSource, ExperimentConfig, ExperimentKind, FedSection,
    ModelConfig, NoiseSection, PredictorSection, SweepSection, VizSection, DATA_DIR_ENV,
};
pub use run::{load_datasets, run, run_with_progress, RunReport, GRADCHECK_INSTANCES};
