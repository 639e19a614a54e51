//! Metrics, estimator comparisons, case studies and the evaluation suite.

mod cases;
mod estimators;
mod metrics;
mod suite;
mod track;

pub use cases::{
    run_case_study, CaseConfig, CaseId, CaseSeries, CaseStudyResult, BIAS_ACCEL_LIMIT,
    BIAS_DRIFT_LIMIT, HIGH_SLIP_RATIO_LIMIT, LAUNCH_RATIO_LIMIT, OUTLIER_RATIO_LIMIT,
    SLIP_WINDOW_THRESHOLD,
};
pub use estimators::{mkf_config_for, run_mkf, run_network, Estimator};
pub use metrics::{
    compare_estimators, compare_series, percent_error, rmse, EstimatorMetrics, EvalOptions,
    MetricReport, ReferenceSource, SquaredErrorSums, EVAL_WARMUP, REPORTED_STATES, REPORT_HEADER,
};
pub use suite::{assign_splits, build_suite, default_suite, split_of, suite_minutes, write_suite, SuiteEntry};
pub use track::{
    error_along_track, track_errors_to_table, truth_states_at, write_track_errors,
    TrackErrorRecord, TRACK_ERROR_HEADER,
};

use thiserror::Error;

use crate::data_pipeline::PipelineError;
use crate::gru_net::NetError;
use crate::io::FormatError;
use crate::mkf::MkfError;
use crate::vehicle_sim::SimError;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("series lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("percent-error normalizer must be positive, got {0}")]
    ZeroNormalizer(f64),
    #[error("no samples to score")]
    NoSamples,
    #[error("case `{0}` needs a network checkpoint")]
    MissingCheckpoint(String),
    #[error("dataset `{dataset}` has no {series} series")]
    MissingSeries { dataset: String, series: &'static str },
    #[error("no ground-truth sample at t = {0} s")]
    Misaligned(f64),
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Filter(#[from] MkfError),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Format(#[from] FormatError),
}
