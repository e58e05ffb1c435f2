//! Supervisor behaviour patches and the learning guards.
//!
//! Patches are scoped, immutable constraints attached by a supervisor; they
//! compile into the directive list every later plan embeds. The learning
//! guards (question-led mode, spaced retrieval practice and low-support
//! competence checks) live here too because patches switch them on.

mod checks;
mod patches;
mod practice;
mod questioning;

use thiserror::Error;

use crate::ids::{ItemId, PatchId};
use crate::time::Timestamp;

pub use checks::{low_support_check, CheckSession};
pub use patches::{
    compile_directives, render_digest, ActiveDirective, BehaviourPatch, CompiledDirectives, Directive,
    ExcludeTarget, PatchDraft, PatchRegistry, PatchScope, PolicyUpdate, QuestioningLevel, ShadowedDirective,
};
pub use practice::{due_list, PracticeItem, PracticeReview, PracticeScheduler};
pub use questioning::{questioning_transform, CLARIFY_INSTRUCTION};

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum PatchError {
    #[error("directive `{0}` has an empty payload")]
    EmptyDirective(String),
    #[error("topic scope needs a topic key")]
    EmptyTopic,
    #[error("patch `{0}` already exists")]
    DuplicatePatch(PatchId),
    #[error("patch `{0}` not found")]
    NotFound(PatchId),
    #[error("patch `{0}` belongs to another student")]
    ForeignSupersession(PatchId),
    #[error("patch `{patch}` is already superseded by `{by}`")]
    AlreadySuperseded { patch: PatchId, by: PatchId },
    #[error("artefact `{0}` has no recorded key steps; a supervisor must seed check questions first")]
    NoKeySteps(ItemId),
    #[error("practice item is not due until {due} (reviewed at {at})")]
    NotDue { due: Timestamp, at: Timestamp },
    #[error("practice item `{0}` not found")]
    UnknownPracticeItem(String),
    #[error("expected {expected} answers, got {got}")]
    AnswerCount { expected: usize, got: usize },
    #[error("check session is already completed")]
    SessionClosed,
    #[error("base interval must be positive")]
    BadInterval,
}
