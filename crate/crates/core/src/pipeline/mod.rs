//! End-to-end experiments: configuration, the staged runner with its prefix
//! cache, ablations, sweeps and reports.

mod config;
mod report;
mod run;
mod sweep;

pub use config::{DatasetConfig, ExperimentConfig, ExplainerConfig, FileDataset, Mode, PriorConfig, SbmDataset};
pub use report::{
    metrics_csv, Aggregate, GraphSummary, RunReport, SeedMetrics, SeedOutcome, SeedReport, Stat, StageTimings, TargetRecord,
    REPORT_SCHEMA_VERSION,
};
pub use run::{evaluate_accuracy, Dataset, Prepared, Runner, Trained};
pub use sweep::{SweepAxis, SweepOutcome};
