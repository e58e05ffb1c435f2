//! Policy-author tooling: clause extraction, conflict scanning and
//! clause-level change tracing between policy corpus versions.
//!
//! Clauses use a line micro-format, `topic-key: requirement value`, where the
//! key is lowercase kebab-case. Any other text is prose and is ignored.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::corpus::Corpus;
use crate::ids::DocumentId;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Clause {
    pub document_id: DocumentId,
    pub topic_key: String,
    pub value: String,
    /// Position of this key among the document's clauses with the same key.
    pub ordinal: usize,
    /// 1-based line number in the document body.
    pub line: usize,
}

fn clause_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"^\s*([a-z][a-z0-9]*(?:-[a-z0-9]+)*)\s*:\s*(\S.*?)\s*$").expect("valid regex")
    })
}

pub fn extract_clauses(document_id: &DocumentId, body: &str) -> Vec<Clause> {
    let mut ordinals: BTreeMap<String, usize> = BTreeMap::new();
    let mut clauses = Vec::new();
    for (i, line) in body.lines().enumerate() {
        if let Some(caps) = clause_pattern().captures(line) {
            let key = caps[1].to_owned();
            let ordinal = ordinals.entry(key.clone()).or_insert(0);
            clauses.push(Clause {
                document_id: document_id.clone(),
                topic_key: key,
                value: caps[2].to_owned(),
                ordinal: *ordinal,
                line: i + 1,
            });
            *ordinal += 1;
        }
    }
    clauses
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Conflict {
    pub clause_a: Clause,
    pub clause_b: Clause,
    pub topic_key: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConflictReport {
    pub conflicts: Vec<Conflict>,
    /// Documents skipped because they carry no clause markers.
    pub warnings: Vec<String>,
}

/// Every pair of clauses sharing a topic key with differing values.
pub fn conflict_scan(corpus: &Corpus) -> ConflictReport {
    let mut report = ConflictReport::default();
    let mut all = Vec::new();
    for doc in &corpus.documents {
        let clauses = extract_clauses(&doc.id, &doc.body);
        if clauses.is_empty() {
            report
                .warnings
                .push(format!("document `{}` has no clause markers; skipped", doc.id));
        }
        all.extend(clauses);
    }
    let mut by_key: BTreeMap<&str, Vec<&Clause>> = BTreeMap::new();
    for c in &all {
        by_key.entry(c.topic_key.as_str()).or_default().push(c);
    }
    for (key, clauses) in by_key {
        for i in 0..clauses.len() {
            for j in i + 1..clauses.len() {
                if normalise(&clauses[i].value) != normalise(&clauses[j].value) {
                    report.conflicts.push(Conflict {
                        clause_a: clauses[i].clone(),
                        clause_b: clauses[j].clone(),
                        topic_key: key.to_owned(),
                    });
                }
            }
        }
    }
    report
}

fn normalise(value: &str) -> String {
    value.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

/// Identity of a clause across versions.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ClauseKey {
    pub document_id: DocumentId,
    pub topic_key: String,
    pub ordinal: usize,
}

pub type ClauseSet = BTreeMap<ClauseKey, String>;

pub fn clause_set(corpus: &Corpus) -> ClauseSet {
    corpus
        .documents
        .iter()
        .flat_map(|d| extract_clauses(&d.id, &d.body))
        .map(|c| {
            (
                ClauseKey {
                    document_id: c.document_id,
                    topic_key: c.topic_key,
                    ordinal: c.ordinal,
                },
                c.value,
            )
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "change", rename_all = "lowercase")]
pub enum ClauseChange {
    Added {
        clause: ClauseKey,
        value: String,
    },
    Removed {
        clause: ClauseKey,
        value: String,
    },
    Changed {
        clause: ClauseKey,
        before: String,
        after: String,
    },
}

pub fn diff_clause_sets(before: &ClauseSet, after: &ClauseSet) -> Vec<ClauseChange> {
    let mut changes = Vec::new();
    for (key, old) in before {
        match after.get(key) {
            None => changes.push(ClauseChange::Removed {
                clause: key.clone(),
                value: old.clone(),
            }),
            Some(new) if new != old => changes.push(ClauseChange::Changed {
                clause: key.clone(),
                before: old.clone(),
                after: new.clone(),
            }),
            Some(_) => {}
        }
    }
    for (key, new) in after {
        if !before.contains_key(key) {
            changes.push(ClauseChange::Added {
                clause: key.clone(),
                value: new.clone(),
            });
        }
    }
    changes
}

pub fn policy_diff(v1: &Corpus, v2: &Corpus) -> Vec<ClauseChange> {
    diff_clause_sets(&clause_set(v1), &clause_set(v2))
}

pub fn apply_diff(base: &ClauseSet, diff: &[ClauseChange]) -> ClauseSet {
    let mut out = base.clone();
    for change in diff {
        match change {
            ClauseChange::Added { clause, value } => {
                out.insert(clause.clone(), value.clone());
            }
            ClauseChange::Removed { clause, .. } => {
                out.remove(clause);
            }
            ClauseChange::Changed { clause, after, .. } => {
                out.insert(clause.clone(), after.clone());
            }
        }
    }
    out
}
