//! Moderation loop, goals and thresholds, consent-gated progress summaries
//! and cohort aggregates.

pub mod aggregates;
pub mod goals;
pub mod moderation;
pub mod summaries;

use thiserror::Error;

use crate::ids::ItemId;
use crate::time::Timestamp;

pub use aggregates::{emit_aggregates, AggregateSignal, CohortMember, DEFAULT_K_MIN};
pub use goals::{
    crosses, evaluate_goal, EvaluatorRegistry, GoalChange, GoalEdit, GoalMetric, GoalSpec, GoalTarget, ReleaseRule,
    TaskGoal,
};
pub use moderation::{CaseState, ModerationCase, Transition};
pub use summaries::{ProgressSummary, ReleasedSummary, SummaryState};

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum SupervisionError {
    #[error("illegal transition {from} -> {to}")]
    IllegalTransition { from: CaseState, to: CaseState },
    #[error("transition at {at} precedes the previous one at {last}")]
    TimeWentBackwards { last: Timestamp, at: Timestamp },
    #[error("artefact `{0}` already has an open moderation case")]
    CaseOpen(ItemId),
    #[error("returning a case requires non-empty feedback")]
    EmptyFeedback,
    #[error("only artefacts can be shared for moderation; `{0}` is not one")]
    NotAnArtefact(ItemId),
    #[error("student has no supervisor to share with")]
    NoSupervisor,
    #[error("threshold {0} is outside (0, 1]")]
    ThresholdOutOfRange(String),
    #[error("goal target must be positive")]
    ZeroTarget,
    #[error("draft completeness needs at least one planned section")]
    NoPlannedSections,
    #[error("goal title is empty")]
    EmptyTitle,
    #[error("no evaluator registered as `{0}`")]
    UnknownEvaluator(String),
    #[error("evidence item `{0}` belongs to another student")]
    ForeignEvidence(ItemId),
    #[error("summary is {actual:?}, expected {expected:?}")]
    SummaryState {
        expected: SummaryState,
        actual: SummaryState,
    },
    #[error("auto-send-summary consent is off")]
    ConsentOff,
    #[error("summary has no recipients")]
    NoRecipients,
}
