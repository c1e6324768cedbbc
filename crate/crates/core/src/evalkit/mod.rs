//! Evaluation: metrics, splits, split amendment, difficulty strata, the
//! multi-run protocol, record import and report files.

mod dedup;
mod import;
mod metrics;
mod protocol;
mod report;
mod split;
mod stratify;

use thiserror::Error;

use crate::icl::IclError;
use crate::metatrain::MetaError;
use crate::observation::ObserveError;
use crate::webenv::EnvError;

pub use dedup::{amend_splits, amend_splits_with, max_cross_split_similarity, max_similarities, unigram_jaccard, DedupConfig};
pub use import::{export_native, import_records, import_str, ImportFormat, Imported};
pub use metrics::{
    compute_metrics, element_accuracy, mean_operation_f1, operation_f1, overall_success_rate, step_matches,
    step_success_rate, EvalMode, Metrics, StepRecord, TaskReport,
};
pub use protocol::{
    run_protocol, AgentModel, AggregateReport, Arm, MeanStd, MetricsSummary, ProtocolConfig, RunTaskReport, Strata,
    StratumTable,
};
pub use report::{report_csv, report_json};
pub use split::{
    default_split, with_partition, SplitName, SplitSpec, DEFAULT_CROSS_TASK_PER_SITE, DEFAULT_HELD_OUT_DOMAINS,
    DEFAULT_HELD_OUT_SITES,
};
pub use stratify::{
    percentile, sequence_difficulty, stratify_difficulty, trajectory_complexity, visual_difficulty, Difficulty,
    DifficultyLabel, VisualThresholds,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("no steps to score")]
    EmptyInput,
    #[error("task {0} has no live success signal")]
    MissingLiveSignal(String),
    #[error("invalid split: {0}")]
    InvalidSplit(String),
    #[error("arm {0} does not match the given model")]
    ArmMismatch(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("malformed file: {0}")]
    MalformedFile(String),
    #[error("report: {0}")]
    Report(String),
    #[error(transparent)]
    Meta(#[from] MetaError),
    #[error(transparent)]
    Icl(#[from] IclError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Observe(#[from] ObserveError),
}
