//! Temporal knowledge graph of a candidature.
//!
//! Facts are `(subject, relation, object, asserted_at)` quadruples with an
//! optional retraction time. History is append-only: facts are never deleted
//! and `asserted_at` never changes. A fact is live at `t` iff
//! `asserted_at <= t < retracted_at` (or it was never retracted).

use std::collections::{BTreeSet, HashSet};
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ids::FactId;
use crate::time::Timestamp;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TkgError {
    #[error("fact already asserted: ({subject}, {relation}, {object}) at {at}")]
    Duplicate {
        subject: String,
        relation: String,
        object: String,
        at: Timestamp,
    },
    #[error("fact `{0}` not found")]
    NotFound(FactId),
    #[error("timestamp {at} is in the future (clock at {now})")]
    FutureTimestamp { at: Timestamp, now: Timestamp },
    #[error("retraction at {retract} must be after assertion at {asserted}")]
    RetractBeforeAssert { asserted: Timestamp, retract: Timestamp },
    #[error("fact `{0}` is already retracted")]
    AlreadyRetracted(FactId),
    #[error("diff window is inverted: {t1} > {t2}")]
    InvertedWindow { t1: Timestamp, t2: Timestamp },
    #[error("ordering constraint `{0}` relates a relation to itself")]
    SelfOrdering(String),
    #[error("checkpoint completion times must be non-decreasing in plan order")]
    UnorderedCheckpoints,
    #[error("milestone plan has no checkpoints")]
    EmptyPlan,
    #[error("malformed fact record on line {line}: {message}")]
    Import { line: usize, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TemporalFact {
    pub id: FactId,
    pub subject: String,
    pub relation: String,
    pub object: String,
    pub asserted_at: Timestamp,
    #[serde(default)]
    pub retracted_at: Option<Timestamp>,
}

impl TemporalFact {
    pub fn is_live_at(&self, t: Timestamp) -> bool {
        self.asserted_at <= t && self.retracted_at.is_none_or(|r| t < r)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FactDiff {
    pub appeared: Vec<TemporalFact>,
    pub disappeared: Vec<TemporalFact>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrderingConstraint {
    pub id: String,
    pub before_relation: String,
    pub after_relation: String,
    pub description: String,
}

impl OrderingConstraint {
    pub fn new(
        id: impl Into<String>,
        before_relation: impl Into<String>,
        after_relation: impl Into<String>,
        description: impl Into<String>,
    ) -> Result<Self, TkgError> {
        let c = Self {
            id: id.into(),
            before_relation: before_relation.into(),
            after_relation: after_relation.into(),
            description: description.into(),
        };
        if c.before_relation == c.after_relation {
            return Err(TkgError::SelfOrdering(c.id));
        }
        Ok(c)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ViolationKind {
    /// No fact with the required predecessor relation exists for the subject.
    MissingPredecessor,
    /// The successor happened strictly before every predecessor.
    OutOfOrder { earliest_predecessor: Timestamp },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub constraint_id: String,
    pub subject: String,
    pub offending_fact: FactId,
    pub kind: ViolationKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub id: String,
    #[serde(default)]
    pub completed_at: Option<Timestamp>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MilestonePlan {
    pub milestone_id: String,
    /// When work on the milestone began; velocity is measured from here.
    pub started_at: Timestamp,
    pub due_at: Timestamp,
    pub checkpoints: Vec<Checkpoint>,
}

impl MilestonePlan {
    pub fn validate(&self) -> Result<(), TkgError> {
        if self.checkpoints.is_empty() {
            return Err(TkgError::EmptyPlan);
        }
        let mut last = None;
        for c in &self.checkpoints {
            if let Some(t) = c.completed_at {
                if last.is_some_and(|l| t < l) {
                    return Err(TkgError::UnorderedCheckpoints);
                }
                last = Some(t);
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SlippageWarning {
    ProjectedAfterDue { projected: Timestamp, due: Timestamp },
    NoProgress { remaining: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Forecast {
    /// `None` when velocity is zero and work remains.
    pub projected_completion_at: Option<Timestamp>,
    pub completed: usize,
    pub remaining: usize,
    pub slippage_warning: Option<SlippageWarning>,
}

/// Linear-velocity projection: completed checkpoints per unit time since the
/// plan started, extrapolated over the remaining checkpoints.
pub fn forecast(plan: &MilestonePlan, as_of: Timestamp) -> Result<Forecast, TkgError> {
    plan.validate()?;
    let done: Vec<Timestamp> = plan
        .checkpoints
        .iter()
        .filter_map(|c| c.completed_at)
        .filter(|t| *t <= as_of)
        .collect();
    let completed = done.len();
    let remaining = plan.checkpoints.len() - completed;
    let late = |projected: Timestamp| {
        (projected > plan.due_at).then_some(SlippageWarning::ProjectedAfterDue {
            projected,
            due: plan.due_at,
        })
    };
    if remaining == 0 {
        let projected = done.iter().copied().max().expect("at least one checkpoint");
        return Ok(Forecast {
            projected_completion_at: Some(projected),
            completed,
            remaining,
            slippage_warning: late(projected),
        });
    }
    if completed == 0 {
        return Ok(Forecast {
            projected_completion_at: None,
            completed,
            remaining,
            slippage_warning: Some(SlippageWarning::NoProgress { remaining }),
        });
    }
    let elapsed = (as_of.0 - plan.started_at.0).max(0) as i128;
    // remaining / (completed / elapsed), rounded up to whole milliseconds
    let needed = (remaining as i128 * elapsed + completed as i128 - 1) / completed as i128;
    let projected = Timestamp(as_of.0.saturating_add(needed.min(i64::MAX as i128) as i64));
    Ok(Forecast {
        projected_completion_at: Some(projected),
        completed,
        remaining,
        slippage_warning: late(projected),
    })
}

#[derive(Debug, Clone, Default)]
pub struct TemporalGraph {
    facts: Vec<TemporalFact>,
    keys: HashSet<(String, String, String, Timestamp)>,
    next_id: u64,
    id_prefix: String,
}

impl TemporalGraph {
    pub fn new() -> Self {
        Self::with_prefix("fact")
    }

    /// Fact ids are `<prefix>-<n>`; per-student graphs use the student id.
    pub fn with_prefix(prefix: impl Into<String>) -> Self {
        Self {
            id_prefix: prefix.into(),
            ..Self::default()
        }
    }

    pub fn facts(&self) -> &[TemporalFact] {
        &self.facts
    }

    pub fn len(&self) -> usize {
        self.facts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.facts.is_empty()
    }

    pub fn assert_fact(
        &mut self,
        subject: impl Into<String>,
        relation: impl Into<String>,
        object: impl Into<String>,
        at: Timestamp,
        now: Timestamp,
    ) -> Result<FactId, TkgError> {
        let (subject, relation, object) = (subject.into(), relation.into(), object.into());
        if at > now {
            return Err(TkgError::FutureTimestamp { at, now });
        }
        let key = (subject.clone(), relation.clone(), object.clone(), at);
        if self.keys.contains(&key) {
            return Err(TkgError::Duplicate {
                subject,
                relation,
                object,
                at,
            });
        }
        self.next_id += 1;
        let id = FactId::new(format!("{}-{}", self.id_prefix, self.next_id));
        self.keys.insert(key);
        self.facts.push(TemporalFact {
            id: id.clone(),
            subject,
            relation,
            object,
            asserted_at: at,
            retracted_at: None,
        });
        Ok(id)
    }

    pub fn retract_fact(&mut self, id: &FactId, at: Timestamp, now: Timestamp) -> Result<(), TkgError> {
        if at > now {
            return Err(TkgError::FutureTimestamp { at, now });
        }
        let fact = self
            .facts
            .iter_mut()
            .find(|f| &f.id == id)
            .ok_or_else(|| TkgError::NotFound(id.clone()))?;
        if fact.retracted_at.is_some() {
            return Err(TkgError::AlreadyRetracted(id.clone()));
        }
        if at <= fact.asserted_at {
            return Err(TkgError::RetractBeforeAssert {
                asserted: fact.asserted_at,
                retract: at,
            });
        }
        fact.retracted_at = Some(at);
        Ok(())
    }

    pub fn get(&self, id: &FactId) -> Option<&TemporalFact> {
        self.facts.iter().find(|f| &f.id == id)
    }

    /// The live fact for `(subject, relation)` at `t`, latest assertion first.
    pub fn current(&self, subject: &str, relation: &str, t: Timestamp) -> Option<&TemporalFact> {
        self.facts
            .iter()
            .filter(|f| f.subject == subject && f.relation == relation && f.is_live_at(t))
            .max_by_key(|f| f.asserted_at)
    }

    pub fn snapshot_at(&self, t: Timestamp) -> Vec<&TemporalFact> {
        self.facts.iter().filter(|f| f.is_live_at(t)).collect()
    }

    pub fn diff(&self, t1: Timestamp, t2: Timestamp) -> Result<FactDiff, TkgError> {
        if t1 > t2 {
            return Err(TkgError::InvertedWindow { t1, t2 });
        }
        let mut d = FactDiff::default();
        for f in &self.facts {
            match (f.is_live_at(t1), f.is_live_at(t2)) {
                (false, true) => d.appeared.push(f.clone()),
                (true, false) => d.disappeared.push(f.clone()),
                _ => {}
            }
        }
        Ok(d)
    }

    pub fn check_constraints(
        &self,
        constraints: &[OrderingConstraint],
        as_of: Timestamp,
    ) -> Vec<Violation> {
        let live = self.snapshot_at(as_of);
        let mut violations = Vec::new();
        for c in constraints {
            let subjects: BTreeSet<&str> = live
                .iter()
                .filter(|f| f.relation == c.after_relation)
                .map(|f| f.subject.as_str())
                .collect();
            for subject in subjects {
                let earliest_before = live
                    .iter()
                    .filter(|f| f.subject == subject && f.relation == c.before_relation)
                    .map(|f| f.asserted_at)
                    .min();
                for after in live
                    .iter()
                    .filter(|f| f.subject == subject && f.relation == c.after_relation)
                {
                    let kind = match earliest_before {
                        None => ViolationKind::MissingPredecessor,
                        Some(b) if after.asserted_at < b => ViolationKind::OutOfOrder {
                            earliest_predecessor: b,
                        },
                        Some(_) => continue,
                    };
                    violations.push(Violation {
                        constraint_id: c.id.clone(),
                        subject: subject.to_owned(),
                        offending_fact: after.id.clone(),
                        kind,
                    });
                }
            }
        }
        violations
    }

    /// One JSON object per line, in assertion order.
    pub fn export<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for f in &self.facts {
            let line = serde_json::to_string(f).map_err(std::io::Error::other)?;
            writeln!(out, "{line}")?;
        }
        Ok(())
    }

    /// Import facts in the export format, preserving ids and retractions.
    pub fn import<R: BufRead>(prefix: impl Into<String>, input: R) -> Result<Self, TkgError> {
        let mut g = Self::with_prefix(prefix);
        for (i, line) in input.lines().enumerate() {
            let line = line.map_err(|e| TkgError::Import {
                line: i + 1,
                message: e.to_string(),
            })?;
            if line.trim().is_empty() {
                continue;
            }
            let fact: TemporalFact = serde_json::from_str(&line).map_err(|e| TkgError::Import {
                line: i + 1,
                message: e.to_string(),
            })?;
            if fact.retracted_at.is_some_and(|r| r <= fact.asserted_at) {
                return Err(TkgError::Import {
                    line: i + 1,
                    message: "retraction not after assertion".into(),
                });
            }
            let key = (
                fact.subject.clone(),
                fact.relation.clone(),
                fact.object.clone(),
                fact.asserted_at,
            );
            if !g.keys.insert(key) {
                return Err(TkgError::Import {
                    line: i + 1,
                    message: "duplicate fact".into(),
                });
            }
            g.next_id += 1;
            g.facts.push(fact);
        }
        Ok(g)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::time::DAY;

    const NOW: Timestamp = Timestamp(1_000_000);

    fn t(n: i64) -> Timestamp {
        Timestamp(n)
    }

    #[test]
    fn snapshot_respects_assertion_time() {
        let mut g = TemporalGraph::new();
        g.assert_fact("A", "submitted", "chapter3", t(5), NOW).unwrap();
        assert_eq!(g.snapshot_at(t(6)).len(), 1);
        assert!(g.snapshot_at(t(4)).is_empty());
    }

    #[test]
    fn retraction_scopes_liveness() {
        let mut g = TemporalGraph::new();
        let id = g.assert_fact("A", "submitted", "chapter3", t(5), NOW).unwrap();
        g.retract_fact(&id, t(8), NOW).unwrap();
        assert!(g.snapshot_at(t(9)).is_empty());
        assert_eq!(g.snapshot_at(t(7)).len(), 1);
        assert!(g.snapshot_at(t(8)).is_empty());
        // history keeps the fact
        assert_eq!(g.len(), 1);
    }

    #[test]
    fn assertion_errors() {
        let mut g = TemporalGraph::new();
        g.assert_fact("A", "r", "o", t(5), NOW).unwrap();
        assert!(matches!(g.assert_fact("A", "r", "o", t(5), NOW), Err(TkgError::Duplicate { .. })));
        assert!(matches!(
            g.assert_fact("A", "r", "o", t(NOW.0 + 1), NOW),
            Err(TkgError::FutureTimestamp { .. })
        ));
        assert!(matches!(
            g.retract_fact(&FactId::new("nope"), t(6), NOW),
            Err(TkgError::NotFound(_))
        ));
        let id = g.facts()[0].id.clone();
        assert!(matches!(g.retract_fact(&id, t(5), NOW), Err(TkgError::RetractBeforeAssert { .. })));
        g.retract_fact(&id, t(6), NOW).unwrap();
        assert!(matches!(g.retract_fact(&id, t(7), NOW), Err(TkgError::AlreadyRetracted(_))));
    }

    #[test]
    fn diff_cases() {
        let mut g = TemporalGraph::new();
        g.assert_fact("A", "r", "o", t(5), NOW).unwrap();
        let same = g.diff(t(3), t(3)).unwrap();
        assert!(same.appeared.is_empty() && same.disappeared.is_empty());
        let d = g.diff(t(3), t(6)).unwrap();
        assert_eq!(d.appeared.len(), 1);
        assert!(d.disappeared.is_empty());
        assert!(matches!(g.diff(t(6), t(3)), Err(TkgError::InvertedWindow { .. })));
    }

    fn confirmation_first() -> OrderingConstraint {
        OrderingConstraint::new("confirm-before-submit", "confirmation", "submission", "confirm first").unwrap()
    }

    #[test]
    fn ordering_constraint_cases() {
        let c = [confirmation_first()];
        let mut ok = TemporalGraph::new();
        ok.assert_fact("A", "confirmation", "passed", t(7), NOW).unwrap();
        ok.assert_fact("A", "submission", "thesis", t(10), NOW).unwrap();
        assert!(ok.check_constraints(&c, t(20)).is_empty());

        let mut missing = TemporalGraph::new();
        missing.assert_fact("A", "submission", "thesis", t(10), NOW).unwrap();
        let v = missing.check_constraints(&c, t(20));
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].constraint_id, "confirm-before-submit");
        assert_eq!(v[0].kind, ViolationKind::MissingPredecessor);

        let mut late = TemporalGraph::new();
        late.assert_fact("A", "submission", "thesis", t(5), NOW).unwrap();
        late.assert_fact("A", "confirmation", "passed", t(9), NOW).unwrap();
        let v = late.check_constraints(&c, t(20));
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].kind, ViolationKind::OutOfOrder { earliest_predecessor: t(9) });
    }

    #[test]
    fn self_ordering_constraint_rejected() {
        assert!(OrderingConstraint::new("x", "a", "a", "").is_err());
    }

    const MONTH: i64 = 30 * DAY;

    fn plan(done: &[Option<i64>], due_months: i64) -> MilestonePlan {
        MilestonePlan {
            milestone_id: "m".into(),
            started_at: t(0),
            due_at: t(due_months * MONTH),
            checkpoints: done
                .iter()
                .enumerate()
                .map(|(i, c)| Checkpoint {
                    id: format!("c{i}"),
                    completed_at: c.map(t),
                })
                .collect(),
        }
    }

    #[test]
    fn all_complete_projects_last_completion() {
        let p = plan(&[Some(MONTH), Some(2 * MONTH)], 6);
        let f = forecast(&p, t(3 * MONTH)).unwrap();
        assert_eq!(f.projected_completion_at, Some(t(2 * MONTH)));
        assert_eq!(f.slippage_warning, None);
    }

    #[test]
    fn half_done_in_six_months_due_in_five_warns() {
        // 2 of 4 in 6 months: velocity 1 per 3 months, 2 remaining -> +6 months
        let p = plan(&[Some(2 * MONTH), Some(5 * MONTH), None, None], 6 + 5);
        let f = forecast(&p, t(6 * MONTH)).unwrap();
        assert_eq!(f.projected_completion_at, Some(t(12 * MONTH)));
        assert!(matches!(f.slippage_warning, Some(SlippageWarning::ProjectedAfterDue { .. })));
    }

    #[test]
    fn zero_velocity_warns() {
        let p = plan(&[None, None], 12);
        let f = forecast(&p, t(MONTH)).unwrap();
        assert_eq!(f.projected_completion_at, None);
        assert_eq!(f.slippage_warning, Some(SlippageWarning::NoProgress { remaining: 2 }));
    }

    #[test]
    fn plan_validation() {
        assert_eq!(forecast(&plan(&[], 1), t(0)), Err(TkgError::EmptyPlan));
        assert_eq!(
            forecast(&plan(&[Some(5), Some(3)], 1), t(10)),
            Err(TkgError::UnorderedCheckpoints)
        );
    }

    #[test]
    fn export_import_round_trip() {
        let mut g = TemporalGraph::with_prefix("a");
        let id = g.assert_fact("A", "r", "o", t(1), NOW).unwrap();
        g.assert_fact("A", "r2", "lit", t(2), NOW).unwrap();
        g.retract_fact(&id, t(3), NOW).unwrap();
        let mut buf = Vec::new();
        g.export(&mut buf).unwrap();
        let back = TemporalGraph::import("a", buf.as_slice()).unwrap();
        assert_eq!(back.facts(), g.facts());
        assert!(matches!(
            TemporalGraph::import("a", "not json\n".as_bytes()),
            Err(TkgError::Import { line: 1, .. })
        ));
    }
}
