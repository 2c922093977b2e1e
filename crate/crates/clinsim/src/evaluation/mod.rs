//! Report parsing, rubric judging, disease-entity linking metrics,
//! score normalization with bootstrap aggregation, the consistency
//! scale, failure tallies, and the completeness-vs-quality regression.

mod linking;
mod report;
mod stats;

pub use linking::{
    average_entity_metrics, entity_metrics, extract_disease_mentions, link_mention,
    DiseaseDictionary, EntityMetrics, LinkOutcome,
};
pub use report::{
    judge_report, parse_judge_output, parse_report, parse_three_part_report, render_reference,
    DiagnosticReport, ReportDimension, RubricJudgment, RubricScores, ThreePartReport,
};
pub use stats::{
    aggregate_scores, consistency_to_score, fit_linear, normalize_rubric, parse_consistency_file,
    parse_failure_labels, tally_failures, AggregateScore, ConsistencyLevel, FailureLabel,
    LinearFit,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("report is missing section: {0}")]
    MissingSection(ReportDimension),
    #[error("judge output missing option letter for dimension {0}")]
    JudgeFormatError(ReportDimension),
    #[error("score {0} out of range")]
    OutOfRange(i64),
    #[error("empty sample")]
    EmptySample,
    #[error("x values are constant; regression is degenerate")]
    DegenerateX,
    #[error("x and y lengths differ: {x} vs {y}")]
    LengthMismatch { x: usize, y: usize },
    #[error("unknown failure label: {0:?}")]
    UnknownLabel(String),
    #[error("invalid disease dictionary: {0}")]
    InvalidDictionary(String),
    #[error(transparent)]
    Backend(#[from] crate::backends::BackendError),
    #[error(transparent)]
    Template(#[from] crate::prompts::TemplateError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}
