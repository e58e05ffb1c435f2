//! k-anonymous cohort signals over consenting students.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::ids::StudentId;

pub const DEFAULT_K_MIN: usize = 5;
pub const METRIC_MEAN_COMPLETION: &str = "mean-goal-completion";
pub const METRIC_ON_TRACK: &str = "milestone-on-track-rate";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateSignal {
    pub cohort_key: String,
    pub metric: String,
    pub value: f64,
    pub group_size: usize,
}

/// Per-student inputs; only the engine builds these.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortMember {
    pub student_id: StudentId,
    pub cohort: String,
    pub consenting: bool,
    /// Mean completion across the student's goals, if any.
    pub mean_completion: Option<f64>,
    /// Whether every milestone forecast is free of slippage, if any.
    pub on_track: Option<bool>,
}

/// Signals per cohort and metric, computed over consenting members with data
/// for that metric. Any group below `k_min` is suppressed entirely.
pub fn emit_aggregates(members: &[CohortMember], k_min: usize) -> Vec<AggregateSignal> {
    let k_min = k_min.max(1);
    let mut cohorts: BTreeMap<&str, Vec<&CohortMember>> = BTreeMap::new();
    for m in members.iter().filter(|m| m.consenting) {
        cohorts.entry(m.cohort.as_str()).or_default().push(m);
    }
    let mut out = Vec::new();
    for (cohort, group) in cohorts {
        let completions: Vec<f64> = group.iter().filter_map(|m| m.mean_completion).collect();
        if completions.len() >= k_min {
            out.push(AggregateSignal {
                cohort_key: cohort.to_owned(),
                metric: METRIC_MEAN_COMPLETION.into(),
                value: completions.iter().sum::<f64>() / completions.len() as f64,
                group_size: completions.len(),
            });
        }
        let tracks: Vec<bool> = group.iter().filter_map(|m| m.on_track).collect();
        if tracks.len() >= k_min {
            out.push(AggregateSignal {
                cohort_key: cohort.to_owned(),
                metric: METRIC_ON_TRACK.into(),
                value: tracks.iter().filter(|t| **t).count() as f64 / tracks.len() as f64,
                group_size: tracks.len(),
            });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn member(i: usize, consenting: bool) -> CohortMember {
        CohortMember {
            student_id: StudentId::new(format!("s{i}")),
            cohort: "2024".into(),
            consenting,
            mean_completion: Some(i as f64 / 10.0),
            on_track: Some(i.is_multiple_of(2)),
        }
    }

    #[test]
    fn small_groups_suppressed() {
        let m: Vec<_> = (0..3).map(|i| member(i, true)).collect();
        assert!(emit_aggregates(&m, 5).is_empty());
    }

    #[test]
    fn only_consenting_members_count() {
        let m: Vec<_> = (0..10).map(|i| member(i, i < 7)).collect();
        let s = emit_aggregates(&m, 5);
        assert_eq!(s.len(), 2);
        assert!(s.iter().all(|x| x.group_size == 7));
        let mean = s.iter().find(|x| x.metric == METRIC_MEAN_COMPLETION).unwrap();
        // (0+1+...+6)/10/7
        assert!((mean.value - 0.3).abs() < 1e-12);
    }

    #[test]
    fn nobody_consenting_is_empty() {
        let m: Vec<_> = (0..10).map(|i| member(i, false)).collect();
        assert!(emit_aggregates(&m, 5).is_empty());
    }
}
