//! Forecasting benchmark: datasets, the prequential protocol, relative
//! metrics, regret and rank tests.

pub mod data;
pub mod metrics;
pub mod protocol;
pub mod regret;
pub mod report;
pub mod stats;

pub use data::{load_csv_tasks, synth_generate, MultiTaskDataset, Provenance};
pub use metrics::{mean_metrics, metrics, Metrics};
pub use protocol::{
    evaluate_online, grid_search, prepare, run_method, ElmConfig, GridOutcome, MethodRun,
    PipelineConfig, Prepared, Sample, SimilaritySource, SplitSpec, Trace,
};
pub use regret::{prefix_losses, prefix_objective, regret_curve, RegretCurve};
pub use report::{compare, write_trace_csv, ComparisonReport, ExperimentReport, MethodSummary};
pub use stats::{friedman_fisher, friedman_with, FriedmanResult, PairCall, PostHoc};
