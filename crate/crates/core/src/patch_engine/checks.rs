//! Low-support competence checks: the student explains key steps of an
//! artefact with the assistant switched off.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::PatchError;
use crate::context_store::ContextItem;
use crate::ids::{ItemId, StudentId};
use crate::orchestrator::backend::Capability;
use crate::time::Timestamp;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckSession {
    pub id: String,
    pub student_id: StudentId,
    pub artefact_id: ItemId,
    pub questions: Vec<String>,
    /// Always empty: no generation assistance during a check.
    pub assist_capabilities: BTreeSet<Capability>,
    pub started_at: Timestamp,
    #[serde(default)]
    pub answers: Vec<String>,
    #[serde(default)]
    pub completed_at: Option<Timestamp>,
}

/// One explain-back question per recorded key step.
pub fn low_support_check(id: impl Into<String>, artefact: &ContextItem, now: Timestamp) -> Result<CheckSession, PatchError> {
    if artefact.key_steps.is_empty() {
        return Err(PatchError::NoKeySteps(artefact.id.clone()));
    }
    Ok(CheckSession {
        id: id.into(),
        student_id: artefact.student_id.clone(),
        artefact_id: artefact.id.clone(),
        questions: artefact
            .key_steps
            .iter()
            .map(|s| format!("In your own words, explain how and why you did this: {s}"))
            .collect(),
        assist_capabilities: BTreeSet::new(),
        started_at: now,
        answers: Vec::new(),
        completed_at: None,
    })
}

impl CheckSession {
    pub fn is_open(&self) -> bool {
        self.completed_at.is_none()
    }

    pub fn submit(&mut self, answers: Vec<String>, now: Timestamp) -> Result<String, PatchError> {
        if !self.is_open() {
            return Err(PatchError::SessionClosed);
        }
        if answers.len() != self.questions.len() {
            return Err(PatchError::AnswerCount {
                expected: self.questions.len(),
                got: answers.len(),
            });
        }
        self.answers = answers;
        self.completed_at = Some(now);
        Ok(self.transcript())
    }

    pub fn transcript(&self) -> String {
        let mut out = format!("Low-support check {} on artefact {}\n", self.id, self.artefact_id);
        for (i, q) in self.questions.iter().enumerate() {
            out.push_str(&format!("Q{}: {q}\n", i + 1));
            if let Some(a) = self.answers.get(i) {
                out.push_str(&format!("A{}: {a}\n", i + 1));
            }
        }
        out
    }
}
