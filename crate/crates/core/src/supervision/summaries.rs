//! Student-curated progress summaries and their consent-gated release.

use serde::{Deserialize, Serialize};

use super::goals::{ReleaseRule, TaskGoal};
use super::SupervisionError;
use crate::ids::{ActorId, GoalId, ItemId, StudentId, SummaryId};
use crate::time::Timestamp;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SummaryState {
    /// Prepared by the assistant, awaiting the student's edits and confirmation.
    Curation,
    Confirmed,
    Released,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProgressSummary {
    pub id: SummaryId,
    pub goal_id: GoalId,
    pub student_id: StudentId,
    pub completion: f64,
    pub narrative: String,
    pub artefact_links: Vec<ItemId>,
    pub curated_by: StudentId,
    pub state: SummaryState,
    pub release_rule: ReleaseRule,
    pub prepared_at: Timestamp,
    #[serde(default)]
    pub confirmed_at: Option<Timestamp>,
    #[serde(default)]
    pub released_to: Vec<ActorId>,
    #[serde(default)]
    pub released_at: Option<Timestamp>,
}

/// What a supervisor receives: the narrative and links, nothing else.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReleasedSummary {
    pub id: SummaryId,
    pub student_id: StudentId,
    pub goal_id: GoalId,
    pub completion: f64,
    pub narrative: String,
    pub artefact_links: Vec<ItemId>,
    pub released_at: Timestamp,
}

impl ProgressSummary {
    pub fn prepare(id: SummaryId, goal: &TaskGoal, completion: f64, links: Vec<ItemId>, now: Timestamp) -> Self {
        let narrative = format!(
            "Goal \"{}\" reached {:.0}% completion (threshold {:.0}%).",
            goal.title,
            completion * 100.0,
            goal.threshold * 100.0
        );
        Self {
            id,
            goal_id: goal.id.clone(),
            student_id: goal.student_id.clone(),
            completion,
            narrative,
            artefact_links: links,
            curated_by: goal.student_id.clone(),
            state: SummaryState::Curation,
            release_rule: goal.release_rule,
            prepared_at: now,
            confirmed_at: None,
            released_to: Vec::new(),
            released_at: None,
        }
    }

    pub fn curate(&mut self, narrative: Option<String>, links: Option<Vec<ItemId>>) -> Result<(), SupervisionError> {
        if self.state != SummaryState::Curation {
            return Err(SupervisionError::SummaryState {
                expected: SummaryState::Curation,
                actual: self.state,
            });
        }
        if let Some(n) = narrative {
            self.narrative = n;
        }
        if let Some(l) = links {
            self.artefact_links = l;
        }
        Ok(())
    }

    pub fn confirm(&mut self, now: Timestamp) -> Result<(), SupervisionError> {
        if self.state != SummaryState::Curation {
            return Err(SupervisionError::SummaryState {
                expected: SummaryState::Curation,
                actual: self.state,
            });
        }
        self.state = SummaryState::Confirmed;
        self.confirmed_at = Some(now);
        Ok(())
    }

    /// The release gate: confirmed by the student and consent on right now.
    pub fn release(&mut self, consent_on: bool, to: Vec<ActorId>, now: Timestamp) -> Result<(), SupervisionError> {
        if self.state != SummaryState::Confirmed {
            return Err(SupervisionError::SummaryState {
                expected: SummaryState::Confirmed,
                actual: self.state,
            });
        }
        if !consent_on {
            return Err(SupervisionError::ConsentOff);
        }
        if to.is_empty() {
            return Err(SupervisionError::NoRecipients);
        }
        self.state = SummaryState::Released;
        self.released_to = to;
        self.released_at = Some(now);
        Ok(())
    }

    pub fn released_view(&self) -> Option<ReleasedSummary> {
        Some(ReleasedSummary {
            id: self.id.clone(),
            student_id: self.student_id.clone(),
            goal_id: self.goal_id.clone(),
            completion: self.completion,
            narrative: self.narrative.clone(),
            artefact_links: self.artefact_links.clone(),
            released_at: self.released_at?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::supervision::goals::{GoalMetric, GoalSpec, GoalTarget};

    fn summary() -> ProgressSummary {
        let goal = TaskGoal::create(
            GoalId::new("g"),
            StudentId::new("s"),
            GoalSpec {
                title: "Lit review".into(),
                metric: GoalMetric::LiteratureReviewedCount,
                target: GoalTarget {
                    value: 10.0,
                    unit: "papers".into(),
                },
                threshold: 0.8,
                release_rule: ReleaseRule::AutoSendOnCross,
            },
            Timestamp(0),
        )
        .unwrap();
        ProgressSummary::prepare(SummaryId::new("sum"), &goal, 0.8, vec![], Timestamp(1))
    }

    #[test]
    fn release_requires_confirmation_and_consent() {
        let mut s = summary();
        assert!(s.narrative.contains("80%"));
        let sup = vec![ActorId::new("sup")];
        assert!(matches!(s.release(true, sup.clone(), Timestamp(2)), Err(SupervisionError::SummaryState { .. })));
        s.curate(Some("My own words.".into()), None).unwrap();
        s.confirm(Timestamp(2)).unwrap();
        assert_eq!(s.release(false, sup.clone(), Timestamp(3)), Err(SupervisionError::ConsentOff));
        assert!(s.released_at.is_none());
        s.release(true, sup, Timestamp(4)).unwrap();
        assert_eq!(s.released_view().unwrap().narrative, "My own words.");
        assert!(s.curate(Some("late".into()), None).is_err());
    }
}
