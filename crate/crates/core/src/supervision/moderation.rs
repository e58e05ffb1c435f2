//! The moderation-loop state machine.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::SupervisionError;
use crate::ids::{ActorId, CaseId, ItemId, PatchId, StudentId};
use crate::time::Timestamp;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum CaseState {
    Draft,
    Shared,
    UnderReview,
    Returned,
    Applied,
    Closed,
}

impl CaseState {
    pub const ALL: [CaseState; 6] = [
        CaseState::Draft,
        CaseState::Shared,
        CaseState::UnderReview,
        CaseState::Returned,
        CaseState::Applied,
        CaseState::Closed,
    ];

    /// The only legal successor.
    pub fn next(self) -> Option<CaseState> {
        match self {
            CaseState::Draft => Some(CaseState::Shared),
            CaseState::Shared => Some(CaseState::UnderReview),
            CaseState::UnderReview => Some(CaseState::Returned),
            CaseState::Returned => Some(CaseState::Applied),
            CaseState::Applied => Some(CaseState::Closed),
            CaseState::Closed => None,
        }
    }

    pub fn is_open(self) -> bool {
        self != CaseState::Closed
    }
}

impl fmt::Display for CaseState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transition {
    pub from: CaseState,
    pub to: CaseState,
    pub at: Timestamp,
    pub actor: ActorId,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModerationCase {
    pub id: CaseId,
    pub artefact_id: ItemId,
    pub student_id: StudentId,
    /// Supervisors whose queue shows the case.
    pub supervisors: BTreeSet<ActorId>,
    /// Supervisor who took the case into review; only they may return it.
    #[serde(default)]
    pub reviewer: Option<ActorId>,
    pub state: CaseState,
    #[serde(default)]
    pub shared_at: Option<Timestamp>,
    #[serde(default)]
    pub returned_at: Option<Timestamp>,
    #[serde(default)]
    pub closed_at: Option<Timestamp>,
    /// Id of the policy update holding the feedback.
    #[serde(default)]
    pub feedback_ref: Option<String>,
    #[serde(default)]
    pub patch_ref: Option<PatchId>,
    #[serde(default)]
    pub history: Vec<Transition>,
}

impl ModerationCase {
    pub fn new(id: CaseId, artefact_id: ItemId, student_id: StudentId, supervisors: BTreeSet<ActorId>) -> Self {
        Self {
            id,
            artefact_id,
            student_id,
            supervisors,
            reviewer: None,
            state: CaseState::Draft,
            shared_at: None,
            returned_at: None,
            closed_at: None,
            feedback_ref: None,
            patch_ref: None,
            history: Vec::new(),
        }
    }

    /// Moves to `to` if it is the single legal successor and time has not
    /// gone backwards. Returned needs feedback to be set first.
    pub fn transition(&mut self, to: CaseState, at: Timestamp, actor: &ActorId) -> Result<(), SupervisionError> {
        if self.state.next() != Some(to) {
            return Err(SupervisionError::IllegalTransition { from: self.state, to });
        }
        if let Some(last) = self.history.last() {
            if at < last.at {
                return Err(SupervisionError::TimeWentBackwards { last: last.at, at });
            }
        }
        if to == CaseState::Returned && self.feedback_ref.is_none() {
            return Err(SupervisionError::EmptyFeedback);
        }
        match to {
            CaseState::Shared => self.shared_at = Some(at),
            CaseState::Returned => self.returned_at = Some(at),
            CaseState::Closed => self.closed_at = Some(at),
            _ => {}
        }
        self.history.push(Transition {
            from: self.state,
            to,
            at,
            actor: actor.clone(),
        });
        self.state = to;
        Ok(())
    }

    pub fn states_visited(&self) -> Vec<CaseState> {
        let mut v = vec![CaseState::Draft];
        v.extend(self.history.iter().map(|t| t.to));
        v
    }
}
