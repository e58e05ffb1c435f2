//! Student-set task goals, their evaluation and threshold crossings.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::SupervisionError;
use crate::context_store::{ContextItem, ItemKind, Verification};
use crate::ids::{GoalId, StudentId};
use crate::time::Timestamp;

pub const TAG_LITERATURE_REVIEWED: &str = "literature-reviewed";
pub const TAG_EXPERIMENT_ANALYSED: &str = "experiment-analysed";
pub const SECTION_TAG_PREFIX: &str = "section:";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum GoalMetric {
    /// Fraction of planned sections present among tagged items.
    DraftCompleteness { planned_sections: Vec<String> },
    LiteratureReviewedCount,
    ExperimentsAnalysedCount,
    Custom { evaluator: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoalTarget {
    pub value: f64,
    pub unit: String,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum ReleaseRule {
    #[default]
    ManualOnly,
    AutoSendOnCross,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoalEdit {
    pub at: Timestamp,
    pub field: String,
    pub old: Value,
    pub new: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskGoal {
    pub id: GoalId,
    pub student_id: StudentId,
    pub title: String,
    pub metric: GoalMetric,
    pub target: GoalTarget,
    pub threshold: f64,
    pub release_rule: ReleaseRule,
    pub created_at: Timestamp,
    #[serde(default)]
    pub edits: Vec<GoalEdit>,
    /// Completion at the last evaluation, for crossing detection.
    #[serde(default)]
    pub last_completion: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoalSpec {
    pub title: String,
    pub metric: GoalMetric,
    pub target: GoalTarget,
    pub threshold: f64,
    #[serde(default)]
    pub release_rule: ReleaseRule,
}

/// Partial goal edit; `None` fields stay as they are.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GoalChange {
    #[serde(default)]
    pub title: Option<String>,
    #[serde(default)]
    pub metric: Option<GoalMetric>,
    #[serde(default)]
    pub target: Option<GoalTarget>,
    #[serde(default)]
    pub threshold: Option<f64>,
    #[serde(default)]
    pub release_rule: Option<ReleaseRule>,
}

fn check_threshold(t: f64) -> Result<(), SupervisionError> {
    if t > 0.0 && t <= 1.0 {
        Ok(())
    } else {
        Err(SupervisionError::ThresholdOutOfRange(t.to_string()))
    }
}

fn check_metric(metric: &GoalMetric, target: &GoalTarget) -> Result<(), SupervisionError> {
    match metric {
        GoalMetric::DraftCompleteness { planned_sections } if planned_sections.is_empty() => {
            Err(SupervisionError::NoPlannedSections)
        }
        GoalMetric::DraftCompleteness { .. } => Ok(()),
        _ if !target.value.is_finite() || target.value <= 0.0 => Err(SupervisionError::ZeroTarget),
        _ => Ok(()),
    }
}

impl TaskGoal {
    pub fn create(id: GoalId, student_id: StudentId, spec: GoalSpec, now: Timestamp) -> Result<Self, SupervisionError> {
        check_threshold(spec.threshold)?;
        check_metric(&spec.metric, &spec.target)?;
        if spec.title.trim().is_empty() {
            return Err(SupervisionError::EmptyTitle);
        }
        Ok(Self {
            id,
            student_id,
            title: spec.title,
            metric: spec.metric,
            target: spec.target,
            threshold: spec.threshold,
            release_rule: spec.release_rule,
            created_at: now,
            edits: Vec::new(),
            last_completion: 0.0,
        })
    }

    /// Applies a change atomically and logs one edit per changed field.
    pub fn apply(&mut self, change: GoalChange, now: Timestamp) -> Result<Vec<GoalEdit>, SupervisionError> {
        let mut next = self.clone();
        let mut edits = Vec::new();
        let mut log = |field: &str, old: Value, new: Value| {
            if old != new {
                edits.push(GoalEdit {
                    at: now,
                    field: field.into(),
                    old,
                    new,
                });
            }
        };
        if let Some(t) = change.title {
            if t.trim().is_empty() {
                return Err(SupervisionError::EmptyTitle);
            }
            log("title", json!(next.title), json!(t));
            next.title = t;
        }
        if let Some(m) = change.metric {
            log("metric", json!(next.metric), json!(m));
            next.metric = m;
        }
        if let Some(t) = change.target {
            log("target", json!(next.target), json!(t));
            next.target = t;
        }
        if let Some(t) = change.threshold {
            check_threshold(t)?;
            log("threshold", json!(next.threshold), json!(t));
            next.threshold = t;
        }
        if let Some(r) = change.release_rule {
            log("releaseRule", json!(next.release_rule), json!(r));
            next.release_rule = r;
        }
        check_metric(&next.metric, &next.target)?;
        next.edits.extend(edits.iter().cloned());
        *self = next;
        Ok(edits)
    }
}

/// Custom completion evaluators, looked up by name.
pub type Evaluator = Arc<dyn Fn(&[&ContextItem]) -> f64 + Send + Sync>;

#[derive(Clone, Default)]
pub struct EvaluatorRegistry {
    evaluators: BTreeMap<String, Evaluator>,
}

impl fmt::Debug for EvaluatorRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.evaluators.keys()).finish()
    }
}

impl EvaluatorRegistry {
    /// Ships `verified-artefact-share`: verified artefacts over all artefacts.
    pub fn with_builtins() -> Self {
        let mut r = Self::default();
        r.register(
            "verified-artefact-share",
            Arc::new(|items: &[&ContextItem]| {
                let artefacts: Vec<_> = items.iter().filter(|i| i.kind == ItemKind::Artefact).collect();
                if artefacts.is_empty() {
                    return 0.0;
                }
                let verified = artefacts.iter().filter(|i| i.verification == Verification::Verified).count();
                verified as f64 / artefacts.len() as f64
            }),
        );
        r
    }

    pub fn register(&mut self, name: impl Into<String>, f: Evaluator) {
        self.evaluators.insert(name.into(), f);
    }

    pub fn get(&self, name: &str) -> Option<&Evaluator> {
        self.evaluators.get(name)
    }
}

/// Completion in `[0, 1]` from the student's own items.
pub fn evaluate_goal(goal: &TaskGoal, evidence: &[&ContextItem], evaluators: &EvaluatorRegistry) -> Result<f64, SupervisionError> {
    if let Some(foreign) = evidence.iter().find(|i| i.student_id != goal.student_id) {
        return Err(SupervisionError::ForeignEvidence(foreign.id.clone()));
    }
    check_metric(&goal.metric, &goal.target)?;
    let tagged = |tag: &str| evidence.iter().filter(|i| i.tags.contains(tag)).count() as f64;
    let raw = match &goal.metric {
        GoalMetric::DraftCompleteness { planned_sections } => {
            let planned: BTreeSet<&str> = planned_sections.iter().map(String::as_str).collect();
            let present: BTreeSet<&str> = evidence
                .iter()
                .flat_map(|i| i.tags.iter())
                .filter_map(|t| t.strip_prefix(SECTION_TAG_PREFIX))
                .filter(|s| planned.contains(s))
                .collect();
            present.len() as f64 / planned.len() as f64
        }
        GoalMetric::LiteratureReviewedCount => tagged(TAG_LITERATURE_REVIEWED) / goal.target.value,
        GoalMetric::ExperimentsAnalysedCount => tagged(TAG_EXPERIMENT_ANALYSED) / goal.target.value,
        GoalMetric::Custom { evaluator } => {
            let f = evaluators
                .get(evaluator)
                .ok_or_else(|| SupervisionError::UnknownEvaluator(evaluator.clone()))?;
            f(evidence)
        }
    };
    Ok(if raw.is_nan() { 0.0 } else { raw.clamp(0.0, 1.0) })
}

/// Upward crossing only: `old < threshold <= new`.
pub fn crosses(old: f64, new: f64, threshold: f64) -> bool {
    old < threshold && threshold <= new
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::context_store::{ItemBody, NewItem, StudentStore};
    use crate::ids::ItemId;

    fn goal(metric: GoalMetric, target: f64) -> TaskGoal {
        TaskGoal::create(
            GoalId::new("g"),
            StudentId::new("s"),
            GoalSpec {
                title: "goal".into(),
                metric,
                target: GoalTarget {
                    value: target,
                    unit: "items".into(),
                },
                threshold: 0.8,
                release_rule: ReleaseRule::ManualOnly,
            },
            Timestamp(0),
        )
        .unwrap()
    }

    fn store_with(tags: &[&str]) -> StudentStore {
        let mut s = StudentStore::new(StudentId::new("s"), 100);
        for (i, t) in tags.iter().enumerate() {
            s.put_item(
                ItemId::new(format!("i{i}")),
                NewItem::new(ItemKind::Artefact, ItemBody::text("x")).with_tag(*t),
                Timestamp(0),
            )
            .unwrap();
        }
        s
    }

    #[test]
    fn draft_completeness_ratio() {
        let g = goal(
            GoalMetric::DraftCompleteness {
                planned_sections: ["intro", "lit", "methods", "results", "discussion"].map(String::from).to_vec(),
            },
            1.0,
        );
        let s = store_with(&["section:intro", "section:lit", "section:methods", "section:results", "section:appendix"]);
        let items = s.get_items(&Default::default());
        assert_eq!(evaluate_goal(&g, &items, &EvaluatorRegistry::default()).unwrap(), 0.8);
    }

    #[test]
    fn counts_and_clamp() {
        let g = goal(GoalMetric::LiteratureReviewedCount, 40.0);
        let s = store_with(&[TAG_LITERATURE_REVIEWED; 12]);
        let items = s.get_items(&Default::default());
        assert!((evaluate_goal(&g, &items, &EvaluatorRegistry::default()).unwrap() - 0.3).abs() < 1e-12);
        let s = store_with(&[TAG_LITERATURE_REVIEWED; 45]);
        let items = s.get_items(&Default::default());
        assert_eq!(evaluate_goal(&g, &items, &EvaluatorRegistry::default()).unwrap(), 1.0);
    }

    #[test]
    fn zero_target_is_a_configuration_error() {
        let spec = GoalSpec {
            title: "t".into(),
            metric: GoalMetric::ExperimentsAnalysedCount,
            target: GoalTarget {
                value: 0.0,
                unit: "experiments".into(),
            },
            threshold: 0.5,
            release_rule: ReleaseRule::ManualOnly,
        };
        assert_eq!(
            TaskGoal::create(GoalId::new("g"), StudentId::new("s"), spec, Timestamp(0)),
            Err(SupervisionError::ZeroTarget)
        );
    }

    #[test]
    fn threshold_range() {
        let mut g = goal(GoalMetric::LiteratureReviewedCount, 10.0);
        for bad in [0.0, -0.1, 1.01] {
            assert!(matches!(
                g.apply(GoalChange { threshold: Some(bad), ..Default::default() }, Timestamp(1)),
                Err(SupervisionError::ThresholdOutOfRange(_))
            ));
        }
        let edits = g.apply(GoalChange { threshold: Some(1.0), ..Default::default() }, Timestamp(1)).unwrap();
        assert_eq!(edits.len(), 1);
        assert_eq!(edits[0].old, json!(0.8));
        assert_eq!(edits[0].new, json!(1.0));
        assert_eq!(g.edits.len(), 1);
    }

    #[test]
    fn custom_evaluator() {
        let g = goal(GoalMetric::Custom { evaluator: "verified-artefact-share".into() }, 1.0);
        let s = store_with(&["a", "b"]);
        let items = s.get_items(&Default::default());
        assert_eq!(evaluate_goal(&g, &items, &EvaluatorRegistry::with_builtins()).unwrap(), 0.0);
        let g = goal(GoalMetric::Custom { evaluator: "nope".into() }, 1.0);
        assert!(matches!(
            evaluate_goal(&g, &items, &EvaluatorRegistry::with_builtins()),
            Err(SupervisionError::UnknownEvaluator(_))
        ));
    }

    #[test]
    fn crossing_is_edge_triggered() {
        assert!(crosses(0.79, 0.80, 0.8));
        assert!(!crosses(0.80, 0.81, 0.8));
        assert!(!crosses(0.9, 0.5, 0.8));
    }
}
