//! Student-set consent. Every scope is off until the student turns it on.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::ids::StudentId;
use crate::time::Timestamp;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ConsentScope {
    AutoSendSummary,
    AggregateSignals,
    WellbeingScreening,
}

impl ConsentScope {
    pub const ALL: [ConsentScope; 3] = [
        ConsentScope::AutoSendSummary,
        ConsentScope::AggregateSignals,
        ConsentScope::WellbeingScreening,
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum ConsentState {
    #[default]
    Off,
    On,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConsentRecord {
    pub student_id: StudentId,
    pub scope: ConsentScope,
    pub state: ConsentState,
    /// `None` when the record is the implicit default.
    pub updated_at: Option<Timestamp>,
}

#[derive(Debug, Default, Clone)]
pub struct ConsentRegistry {
    records: BTreeMap<(StudentId, ConsentScope), ConsentRecord>,
}

impl ConsentRegistry {
    pub fn get(&self, student: &StudentId, scope: ConsentScope) -> ConsentRecord {
        self.records
            .get(&(student.clone(), scope))
            .cloned()
            .unwrap_or(ConsentRecord {
                student_id: student.clone(),
                scope,
                state: ConsentState::Off,
                updated_at: None,
            })
    }

    pub fn is_on(&self, student: &StudentId, scope: ConsentScope) -> bool {
        self.get(student, scope).state == ConsentState::On
    }

    pub fn set(
        &mut self,
        student: &StudentId,
        scope: ConsentScope,
        state: ConsentState,
        at: Timestamp,
    ) -> ConsentRecord {
        let record = ConsentRecord {
            student_id: student.clone(),
            scope,
            state,
            updated_at: Some(at),
        };
        self.records.insert((student.clone(), scope), record.clone());
        record
    }

    pub fn all_for(&self, student: &StudentId) -> Vec<ConsentRecord> {
        ConsentScope::ALL.iter().map(|s| self.get(student, *s)).collect()
    }
}
