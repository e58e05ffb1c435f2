//! The private, per-student context store.
//!
//! One [`StudentStore`] per student holds the item table, the conversation
//! turns with their rolling summary, the readiness vector and the student's
//! temporal knowledge graph. Nothing in here is keyed across students; the
//! engine owns one store per student and never hands one student's store to
//! an operation on another.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Seek, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ids::{DocumentId, ItemId, StudentId};
use crate::retrieval::{Corpus, CorpusClass, Document, SourceBacklink};
use crate::time::{Timestamp, DAY};
use crate::tkg::{TemporalGraph, TkgError};

pub const DEFAULT_SUMMARY_BUDGET: usize = 2_000;
/// Longest excerpt kept per salient turn.
pub const EXCERPT_CHARS: usize = 160;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ContextError {
    #[error("item `{0}` not found")]
    NotFound(ItemId),
    #[error("item `{0}` already exists")]
    DuplicateItem(ItemId),
    #[error("readiness value {value} for {component} is outside [0, 1]")]
    OutOfRange { component: String, value: String },
    #[error("turn {got} is not after turn {last}")]
    TurnsOutOfOrder { last: u64, got: u64 },
    #[error(transparent)]
    Tkg(#[from] TkgError),
    #[error("export failed: {0}")]
    Export(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ItemKind {
    Profile,
    ResearchDescription,
    Document,
    Decision,
    Artefact,
    Summary,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Verification {
    #[default]
    Unverified,
    Verified,
    Failed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "class", rename_all = "kebab-case")]
pub enum RetentionClass {
    /// Kept until the student purges it.
    UntilPurge,
    /// Swept once older than `days`.
    Rolling { days: u32 },
}

impl RetentionClass {
    pub fn default_for(kind: ItemKind) -> Self {
        match kind {
            ItemKind::Summary => RetentionClass::Rolling { days: 365 },
            _ => RetentionClass::UntilPurge,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ItemBody {
    pub content: String,
    pub media_type: String,
}

impl ItemBody {
    pub fn text(content: impl Into<String>) -> Self {
        Self {
            content: content.into(),
            media_type: "text/plain".into(),
        }
    }
}

/// Claim counts as tagged by the generation backend.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClaimTally {
    pub total: u32,
    pub cited: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextItem {
    pub id: ItemId,
    pub student_id: StudentId,
    pub kind: ItemKind,
    pub body: ItemBody,
    #[serde(default)]
    pub citations: Vec<SourceBacklink>,
    #[serde(default)]
    pub verification: Verification,
    pub created_at: Timestamp,
    pub updated_at: Timestamp,
    /// Bumped on every body edit; doubles as the retrieval document version.
    #[serde(default = "first_revision")]
    pub revision: u32,
    pub retention_class: RetentionClass,
    /// Free-form labels, e.g. `section:methods` or `literature-reviewed`.
    #[serde(default)]
    pub tags: BTreeSet<String>,
    /// Key reasoning steps, used by low-support competence checks.
    #[serde(default)]
    pub key_steps: Vec<String>,
    #[serde(default)]
    pub claims: ClaimTally,
}

fn first_revision() -> u32 {
    1
}

/// Caller-supplied fields of a new item.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NewItem {
    pub kind: ItemKind,
    pub body: ItemBody,
    #[serde(default)]
    pub citations: Vec<SourceBacklink>,
    #[serde(default)]
    pub tags: BTreeSet<String>,
    #[serde(default)]
    pub key_steps: Vec<String>,
    #[serde(default)]
    pub claims: ClaimTally,
    #[serde(default)]
    pub retention_class: Option<RetentionClass>,
}

impl NewItem {
    pub fn new(kind: ItemKind, body: ItemBody) -> Self {
        Self {
            kind,
            body,
            citations: Vec::new(),
            tags: BTreeSet::new(),
            key_steps: Vec::new(),
            claims: ClaimTally::default(),
            retention_class: None,
        }
    }

    pub fn with_tag(mut self, tag: impl Into<String>) -> Self {
        self.tags.insert(tag.into());
        self
    }

    pub fn with_citations(mut self, citations: Vec<SourceBacklink>) -> Self {
        self.citations = citations;
        self
    }
}

/// Partial update; `None` fields are left alone.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ItemEdit {
    #[serde(default)]
    pub body: Option<ItemBody>,
    #[serde(default)]
    pub citations: Option<Vec<SourceBacklink>>,
    #[serde(default)]
    pub tags: Option<BTreeSet<String>>,
    #[serde(default)]
    pub key_steps: Option<Vec<String>>,
    #[serde(default)]
    pub claims: Option<ClaimTally>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ItemFilter {
    #[serde(default)]
    pub kind: Option<ItemKind>,
    #[serde(default)]
    pub tag: Option<String>,
    #[serde(default)]
    pub verification: Option<Verification>,
}

impl ItemFilter {
    pub fn kind(kind: ItemKind) -> Self {
        Self {
            kind: Some(kind),
            ..Self::default()
        }
    }

    pub fn matches(&self, item: &ContextItem) -> bool {
        self.kind.is_none_or(|k| k == item.kind)
            && self.tag.as_ref().is_none_or(|t| item.tags.contains(t))
            && self.verification.is_none_or(|v| v == item.verification)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Speaker {
    Student,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    pub index: u64,
    pub speaker: Speaker,
    pub text: String,
    /// Earlier turns this one refers back to.
    #[serde(default)]
    pub refs: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Snippet {
    pub turn_index: u64,
    pub excerpt: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RollingSummary {
    pub student_id: StudentId,
    pub window_start: u64,
    pub window_end: u64,
    pub text: String,
    pub salient_snippets: Vec<Snippet>,
}

impl RollingSummary {
    fn empty(student_id: StudentId) -> Self {
        Self {
            student_id,
            window_start: 0,
            window_end: 0,
            text: String::new(),
            salient_snippets: Vec::new(),
        }
    }
}

fn excerpt(text: &str, max_chars: usize) -> String {
    let flat = text.split_whitespace().collect::<Vec<_>>().join(" ");
    match flat.char_indices().nth(max_chars) {
        Some((cut, _)) => flat[..cut].to_owned(),
        None => flat,
    }
}

fn snippet_line(s: &Snippet) -> String {
    format!("[#{}] {}", s.turn_index, s.excerpt)
}

/// Deterministic baseline digest: the most recent turn plus every turn a
/// later turn refers back to, newest first until the budget is spent.
pub fn summarise(student_id: &StudentId, turns: &[Turn], budget: usize) -> RollingSummary {
    let Some(last) = turns.last() else {
        return RollingSummary::empty(student_id.clone());
    };
    let known: BTreeSet<u64> = turns.iter().map(|t| t.index).collect();
    let mut salient: BTreeSet<u64> = BTreeSet::from([last.index]);
    for t in turns {
        salient.extend(t.refs.iter().filter(|r| **r < t.index && known.contains(r)));
    }
    let by_index: BTreeMap<u64, &Turn> = turns.iter().map(|t| (t.index, t)).collect();

    let mut chosen: Vec<Snippet> = Vec::new();
    let mut used = 0usize;
    for idx in salient.iter().rev() {
        let mut s = Snippet {
            turn_index: *idx,
            excerpt: excerpt(&by_index[idx].text, EXCERPT_CHARS),
        };
        let sep = usize::from(!chosen.is_empty());
        let mut len = snippet_line(&s).chars().count();
        if used + sep + len > budget {
            if !chosen.is_empty() {
                break;
            }
            // the newest turn is always represented, truncated if need be
            let prefix = format!("[#{}] ", s.turn_index).chars().count();
            if prefix >= budget {
                break;
            }
            s.excerpt = excerpt(&s.excerpt, budget - prefix);
            len = snippet_line(&s).chars().count();
        }
        used += sep + len;
        chosen.push(s);
    }
    chosen.reverse();
    let text = chosen.iter().map(snippet_line).collect::<Vec<_>>().join("\n");
    RollingSummary {
        student_id: student_id.clone(),
        window_start: chosen.first().map_or(last.index, |s| s.turn_index),
        window_end: last.index,
        text,
        salient_snippets: chosen,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum ReadinessComponent {
    QuestionMaturity,
    DesignReadiness,
    DataReadiness,
    EthicsRisk,
    CitationCoverage,
}

impl ReadinessComponent {
    pub const ALL: [ReadinessComponent; 5] = [
        ReadinessComponent::QuestionMaturity,
        ReadinessComponent::DesignReadiness,
        ReadinessComponent::DataReadiness,
        ReadinessComponent::EthicsRisk,
        ReadinessComponent::CitationCoverage,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            ReadinessComponent::QuestionMaturity => "question-maturity",
            ReadinessComponent::DesignReadiness => "design-readiness",
            ReadinessComponent::DataReadiness => "data-readiness",
            ReadinessComponent::EthicsRisk => "ethics-risk",
            ReadinessComponent::CitationCoverage => "citation-coverage",
        }
    }

    pub fn relation(self) -> String {
        format!("readiness:{}", self.tag())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReadinessState {
    pub student_id: StudentId,
    pub question_maturity: f64,
    pub design_readiness: f64,
    pub data_readiness: f64,
    pub ethics_risk: f64,
    pub citation_coverage: f64,
    pub as_of: Timestamp,
}

impl ReadinessState {
    pub fn new(student_id: StudentId) -> Self {
        Self {
            student_id,
            question_maturity: 0.0,
            design_readiness: 0.0,
            data_readiness: 0.0,
            ethics_risk: 0.0,
            citation_coverage: 0.0,
            as_of: Timestamp::EPOCH,
        }
    }

    pub fn get(&self, c: ReadinessComponent) -> f64 {
        *self.slot(c)
    }

    fn slot(&self, c: ReadinessComponent) -> &f64 {
        match c {
            ReadinessComponent::QuestionMaturity => &self.question_maturity,
            ReadinessComponent::DesignReadiness => &self.design_readiness,
            ReadinessComponent::DataReadiness => &self.data_readiness,
            ReadinessComponent::EthicsRisk => &self.ethics_risk,
            ReadinessComponent::CitationCoverage => &self.citation_coverage,
        }
    }

    fn slot_mut(&mut self, c: ReadinessComponent) -> &mut f64 {
        match c {
            ReadinessComponent::QuestionMaturity => &mut self.question_maturity,
            ReadinessComponent::DesignReadiness => &mut self.design_readiness,
            ReadinessComponent::DataReadiness => &mut self.data_readiness,
            ReadinessComponent::EthicsRisk => &mut self.ethics_risk,
            ReadinessComponent::CitationCoverage => &mut self.citation_coverage,
        }
    }
}

#[derive(Debug, Clone)]
pub struct StudentStore {
    student_id: StudentId,
    items: BTreeMap<ItemId, ContextItem>,
    turns: Vec<Turn>,
    summary: RollingSummary,
    summary_budget: usize,
    readiness: ReadinessState,
    graph: TemporalGraph,
}

impl StudentStore {
    pub fn new(student_id: StudentId, summary_budget: usize) -> Self {
        Self {
            items: BTreeMap::new(),
            turns: Vec::new(),
            summary: RollingSummary::empty(student_id.clone()),
            summary_budget,
            readiness: ReadinessState::new(student_id.clone()),
            graph: TemporalGraph::with_prefix(format!("{student_id}-fact")),
            student_id,
        }
    }

    pub fn student_id(&self) -> &StudentId {
        &self.student_id
    }

    pub fn put_item(&mut self, id: ItemId, new: NewItem, now: Timestamp) -> Result<&ContextItem, ContextError> {
        if self.items.contains_key(&id) {
            return Err(ContextError::DuplicateItem(id));
        }
        let item = ContextItem {
            id: id.clone(),
            student_id: self.student_id.clone(),
            kind: new.kind,
            body: new.body,
            citations: new.citations,
            verification: Verification::Unverified,
            created_at: now,
            updated_at: now,
            revision: 1,
            retention_class: new.retention_class.unwrap_or(RetentionClass::default_for(new.kind)),
            tags: new.tags,
            key_steps: new.key_steps,
            claims: new.claims,
        };
        Ok(self.items.entry(id).or_insert(item))
    }

    pub fn get_item(&self, id: &ItemId) -> Result<&ContextItem, ContextError> {
        self.items.get(id).ok_or_else(|| ContextError::NotFound(id.clone()))
    }

    pub fn get_items(&self, filter: &ItemFilter) -> Vec<&ContextItem> {
        self.items.values().filter(|i| filter.matches(i)).collect()
    }

    /// Editing content or citations invalidates an earlier verification.
    pub fn edit_item(&mut self, id: &ItemId, edit: ItemEdit, now: Timestamp) -> Result<&ContextItem, ContextError> {
        let item = self.items.get_mut(id).ok_or_else(|| ContextError::NotFound(id.clone()))?;
        if edit.body.is_some() || edit.citations.is_some() {
            item.verification = Verification::Unverified;
        }
        if let Some(b) = edit.body {
            item.body = b;
            item.revision += 1;
        }
        if let Some(c) = edit.citations {
            item.citations = c;
        }
        if let Some(t) = edit.tags {
            item.tags = t;
        }
        if let Some(k) = edit.key_steps {
            item.key_steps = k;
        }
        if let Some(c) = edit.claims {
            item.claims = c;
        }
        item.updated_at = now;
        Ok(item)
    }

    /// Hard delete. Quoted text that other items cite from the purged item is
    /// redacted as well, so the body cannot leak back out through a citation.
    pub fn purge_item(&mut self, id: &ItemId) -> Result<ContextItem, ContextError> {
        let removed = self.items.remove(id).ok_or_else(|| ContextError::NotFound(id.clone()))?;
        let doc = DocumentId::new(id.as_str());
        for item in self.items.values_mut() {
            for c in item.citations.iter_mut().filter(|c| c.document_id == doc) {
                c.quoted_text.clear();
            }
        }
        Ok(removed)
    }

    /// Items whose rolling retention has lapsed at `now`.
    pub fn expired_items(&self, now: Timestamp) -> Vec<ItemId> {
        self.items
            .values()
            .filter(|i| match i.retention_class {
                RetentionClass::UntilPurge => false,
                RetentionClass::Rolling { days } => now.0 - i.created_at.0 > days as i64 * DAY,
            })
            .map(|i| i.id.clone())
            .collect()
    }

    /// Citation-resolution check. Verified needs at least one citation and
    /// every citation resolving in one of `corpora`.
    pub fn run_verifier(&mut self, id: &ItemId, corpora: &[&Corpus], now: Timestamp) -> Result<Verification, ContextError> {
        let item = self.items.get_mut(id).ok_or_else(|| ContextError::NotFound(id.clone()))?;
        let outcome = if item.citations.is_empty() {
            Verification::Unverified
        } else if item
            .citations
            .iter()
            .all(|c| corpora.iter().any(|corpus| c.resolves_in(corpus)))
        {
            Verification::Verified
        } else {
            Verification::Failed
        };
        item.verification = outcome;
        item.updated_at = now;
        Ok(outcome)
    }

    /// The student's documents as a retrieval corpus; document ids are item ids.
    pub fn corpus(&self) -> Corpus {
        let docs = self
            .items
            .values()
            .filter(|i| matches!(i.kind, ItemKind::Document | ItemKind::ResearchDescription))
            .map(|i| {
                let title = i
                    .tags
                    .iter()
                    .find_map(|t| t.strip_prefix("title:"))
                    .unwrap_or(i.id.as_str())
                    .to_owned();
                let mut d = Document::new(i.id.as_str(), title, i.body.content.clone());
                d.version = i.revision;
                d
            })
            .collect();
        Corpus::new(
            format!("student-{}", self.student_id),
            CorpusClass::StudentCorpus(self.student_id.clone()),
            docs,
        )
    }

    pub fn turns(&self) -> &[Turn] {
        &self.turns
    }

    pub fn next_turn_index(&self) -> u64 {
        self.turns.last().map_or(0, |t| t.index + 1)
    }

    pub fn summary(&self) -> &RollingSummary {
        &self.summary
    }

    pub fn update_rolling_summary(&mut self, new_turns: Vec<Turn>) -> Result<&RollingSummary, ContextError> {
        if new_turns.is_empty() {
            return Ok(&self.summary);
        }
        let mut last = self.turns.last().map(|t| t.index);
        for t in &new_turns {
            if let Some(l) = last {
                if t.index <= l {
                    return Err(ContextError::TurnsOutOfOrder { last: l, got: t.index });
                }
            }
            last = Some(t.index);
        }
        self.turns.extend(new_turns);
        self.summary = summarise(&self.student_id, &self.turns, self.summary_budget);
        Ok(&self.summary)
    }

    pub fn readiness(&self) -> &ReadinessState {
        &self.readiness
    }

    /// Sets one component and records the change in the temporal graph,
    /// retracting the fact for the previous value.
    pub fn update_readiness(
        &mut self,
        component: ReadinessComponent,
        value: f64,
        now: Timestamp,
    ) -> Result<&ReadinessState, ContextError> {
        if !(0.0..=1.0).contains(&value) {
            return Err(ContextError::OutOfRange {
                component: component.tag().into(),
                value: value.to_string(),
            });
        }
        let subject = self.student_id.to_string();
        let relation = component.relation();
        if let Some(prev) = self.graph.current(&subject, &relation, now).map(|f| f.id.clone()) {
            self.graph.retract_fact(&prev, now, now)?;
        }
        self.graph.assert_fact(subject, relation, value.to_string(), now, now)?;
        *self.readiness.slot_mut(component) = value;
        self.readiness.as_of = now;
        Ok(&self.readiness)
    }

    /// Cited claims over total claims across artefacts, when any claims exist.
    pub fn citation_coverage_estimate(&self) -> Option<f64> {
        let (cited, total) = self
            .items
            .values()
            .filter(|i| i.kind == ItemKind::Artefact)
            .fold((0u64, 0u64), |(c, t), i| {
                (c + i.claims.cited.min(i.claims.total) as u64, t + i.claims.total as u64)
            });
        (total > 0).then(|| cited as f64 / total as f64)
    }

    pub fn graph(&self) -> &TemporalGraph {
        &self.graph
    }

    pub fn graph_mut(&mut self) -> &mut TemporalGraph {
        &mut self.graph
    }

    /// Data-portability export: one structured-text record per entry.
    pub fn export_zip<W: Write + Seek>(&self, out: W) -> Result<W, ContextError> {
        use zip::write::SimpleFileOptions;
        let err = |e: &dyn std::fmt::Display| ContextError::Export(e.to_string());
        let opts = SimpleFileOptions::default()
            .compression_method(zip::CompressionMethod::Deflated)
            .last_modified_time(zip::DateTime::default());
        let mut zip = zip::ZipWriter::new(out);
        let mut record = |name: String, bytes: Vec<u8>| -> Result<(), ContextError> {
            zip.start_file(name, opts).map_err(|e| err(&e))?;
            zip.write_all(&bytes).map_err(|e| err(&e))
        };
        for item in self.items.values() {
            let json = serde_json::to_vec_pretty(item).map_err(|e| err(&e))?;
            record(format!("items/{}.json", item.id), json)?;
        }
        let mut turns = Vec::new();
        for t in &self.turns {
            serde_json::to_writer(&mut turns, t).map_err(|e| err(&e))?;
            turns.push(b'\n');
        }
        record("turns.jsonl".into(), turns)?;
        record(
            "summary.json".into(),
            serde_json::to_vec_pretty(&self.summary).map_err(|e| err(&e))?,
        )?;
        record(
            "readiness.json".into(),
            serde_json::to_vec_pretty(&self.readiness).map_err(|e| err(&e))?,
        )?;
        let mut facts = Vec::new();
        self.graph.export(&mut facts).map_err(|e| err(&e))?;
        record("facts.jsonl".into(), facts)?;
        zip.finish().map_err(|e| err(&e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn store() -> StudentStore {
        StudentStore::new(StudentId::new("alice"), DEFAULT_SUMMARY_BUDGET)
    }

    fn turn(index: u64, text: &str, refs: &[u64]) -> Turn {
        Turn {
            index,
            speaker: if index.is_multiple_of(2) { Speaker::Student } else { Speaker::Assistant },
            text: text.into(),
            refs: refs.to_vec(),
        }
    }

    #[test]
    fn put_get_edit_purge() {
        let mut s = store();
        let id = ItemId::new("i1");
        s.put_item(id.clone(), NewItem::new(ItemKind::Decision, ItemBody::text("use mixed methods")), Timestamp(1))
            .unwrap();
        assert_eq!(s.get_item(&id).unwrap().body.content, "use mixed methods");
        assert!(matches!(
            s.put_item(id.clone(), NewItem::new(ItemKind::Decision, ItemBody::text("x")), Timestamp(1)),
            Err(ContextError::DuplicateItem(_))
        ));
        let edited = s
            .edit_item(&id, ItemEdit { body: Some(ItemBody::text("use a survey")), ..ItemEdit::default() }, Timestamp(2))
            .unwrap();
        assert_eq!(edited.updated_at, Timestamp(2));
        assert_eq!(edited.created_at, Timestamp(1));
        let removed = s.purge_item(&id).unwrap();
        assert_eq!(removed.body.content, "use a survey");
        assert_eq!(s.get_item(&id), Err(ContextError::NotFound(id.clone())));
        assert!(s.get_items(&ItemFilter::default()).is_empty());
    }

    #[test]
    fn purge_redacts_quotes_in_other_items() {
        let mut s = store();
        let doc = ItemId::new("doc");
        s.put_item(doc.clone(), NewItem::new(ItemKind::Document, ItemBody::text("secret finding.")), Timestamp(1))
            .unwrap();
        let cite = SourceBacklink {
            document_id: DocumentId::new("doc"),
            passage_span: (0, 15),
            document_version: 1,
            quoted_text: "secret finding.".into(),
        };
        s.put_item(
            ItemId::new("a"),
            NewItem::new(ItemKind::Artefact, ItemBody::text("draft")).with_citations(vec![cite]),
            Timestamp(1),
        )
        .unwrap();
        s.purge_item(&doc).unwrap();
        assert_eq!(s.get_item(&ItemId::new("a")).unwrap().citations[0].quoted_text, "");
        assert!(s.corpus().documents.is_empty());
    }

    #[test]
    fn verifier_outcomes() {
        let mut s = store();
        s.put_item(ItemId::new("doc"), NewItem::new(ItemKind::Document, ItemBody::text("Ethics approval first.")), Timestamp(1))
            .unwrap();
        let good = SourceBacklink {
            document_id: DocumentId::new("doc"),
            passage_span: (0, 22),
            document_version: 1,
            quoted_text: "Ethics approval first.".into(),
        };
        let bad = SourceBacklink {
            quoted_text: "something else".into(),
            ..good.clone()
        };
        s.put_item(ItemId::new("none"), NewItem::new(ItemKind::Artefact, ItemBody::text("x")), Timestamp(1)).unwrap();
        s.put_item(
            ItemId::new("ok"),
            NewItem::new(ItemKind::Artefact, ItemBody::text("x")).with_citations(vec![good.clone()]),
            Timestamp(1),
        )
        .unwrap();
        s.put_item(
            ItemId::new("bad"),
            NewItem::new(ItemKind::Artefact, ItemBody::text("x")).with_citations(vec![good, bad]),
            Timestamp(1),
        )
        .unwrap();
        let corpus = s.corpus();
        assert_eq!(s.run_verifier(&ItemId::new("none"), &[&corpus], Timestamp(2)).unwrap(), Verification::Unverified);
        assert_eq!(s.run_verifier(&ItemId::new("ok"), &[&corpus], Timestamp(2)).unwrap(), Verification::Verified);
        assert_eq!(s.run_verifier(&ItemId::new("bad"), &[&corpus], Timestamp(2)).unwrap(), Verification::Failed);
        s.edit_item(&ItemId::new("ok"), ItemEdit { body: Some(ItemBody::text("y")), ..ItemEdit::default() }, Timestamp(3))
            .unwrap();
        assert_eq!(s.get_item(&ItemId::new("ok")).unwrap().verification, Verification::Unverified);
    }

    #[test]
    fn empty_turns_leave_summary_unchanged() {
        let mut s = store();
        s.update_rolling_summary(vec![turn(0, "hello", &[])]).unwrap();
        let before = s.summary().clone();
        assert_eq!(s.update_rolling_summary(vec![]).unwrap(), &before);
    }

    #[test]
    fn salience_is_latest_plus_referenced() {
        let mut s = store();
        s.update_rolling_summary(vec![
            turn(0, "what is my question", &[]),
            turn(1, "a framing", &[]),
            turn(2, "back to the framing", &[1]),
            turn(3, "latest", &[]),
        ])
        .unwrap();
        let idx: Vec<u64> = s.summary().salient_snippets.iter().map(|s| s.turn_index).collect();
        assert_eq!(idx, vec![1, 3]);
        assert_eq!(s.summary().text, "[#1] a framing\n[#3] latest");
        assert_eq!((s.summary().window_start, s.summary().window_end), (1, 3));
    }

    #[test]
    fn turns_must_advance() {
        let mut s = store();
        s.update_rolling_summary(vec![turn(3, "a", &[])]).unwrap();
        assert_eq!(
            s.update_rolling_summary(vec![turn(3, "b", &[])]),
            Err(ContextError::TurnsOutOfOrder { last: 3, got: 3 })
        );
    }

    #[test]
    fn fifty_turns_fit_a_thousand_chars() {
        let turns: Vec<Turn> = (0..50)
            .map(|i| turn(i, &"long words ".repeat(40), &(0..i).collect::<Vec<_>>()))
            .collect();
        let sum = summarise(&StudentId::new("a"), &turns, 1_000);
        assert!(sum.text.chars().count() <= 1_000);
        assert!(!sum.salient_snippets.is_empty());
    }

    #[test]
    fn readiness_updates_one_slot_and_records_facts() {
        let mut s = store();
        let before = s.readiness().clone();
        let after = s.update_readiness(ReadinessComponent::QuestionMaturity, 0.5, Timestamp(10)).unwrap().clone();
        for c in ReadinessComponent::ALL {
            if c == ReadinessComponent::QuestionMaturity {
                assert_eq!(after.get(c), 0.5);
            } else {
                assert_eq!(after.get(c), before.get(c));
            }
        }
        assert!(matches!(
            s.update_readiness(ReadinessComponent::EthicsRisk, 1.2, Timestamp(11)),
            Err(ContextError::OutOfRange { .. })
        ));
        s.update_readiness(ReadinessComponent::QuestionMaturity, 0.7, Timestamp(20)).unwrap();
        let d = s.graph().diff(Timestamp(10), Timestamp(20)).unwrap();
        assert_eq!(d.appeared.len(), 1);
        assert_eq!(d.appeared[0].object, "0.7");
        assert_eq!(d.disappeared.len(), 1);
        assert_eq!(d.disappeared[0].object, "0.5");
    }

    #[test]
    fn coverage_heuristic() {
        let mut s = store();
        assert_eq!(s.citation_coverage_estimate(), None);
        let mut a = NewItem::new(ItemKind::Artefact, ItemBody::text("x"));
        a.claims = ClaimTally { total: 4, cited: 3 };
        s.put_item(ItemId::new("a"), a.clone(), Timestamp(1)).unwrap();
        a.claims = ClaimTally { total: 4, cited: 1 };
        s.put_item(ItemId::new("b"), a, Timestamp(1)).unwrap();
        assert_eq!(s.citation_coverage_estimate(), Some(0.5));
    }

    #[test]
    fn summary_items_roll_off_after_a_year() {
        let mut s = store();
        s.put_item(ItemId::new("s"), NewItem::new(ItemKind::Summary, ItemBody::text("x")), Timestamp(0)).unwrap();
        s.put_item(ItemId::new("d"), NewItem::new(ItemKind::Decision, ItemBody::text("x")), Timestamp(0)).unwrap();
        assert!(s.expired_items(Timestamp(365 * DAY)).is_empty());
        assert_eq!(s.expired_items(Timestamp(366 * DAY)), vec![ItemId::new("s")]);
    }

    #[test]
    fn zip_export_lists_records() {
        let mut s = store();
        s.put_item(ItemId::new("i1"), NewItem::new(ItemKind::Decision, ItemBody::text("x")), Timestamp(1)).unwrap();
        s.update_readiness(ReadinessComponent::DataReadiness, 0.2, Timestamp(2)).unwrap();
        let out = s.export_zip(std::io::Cursor::new(Vec::new())).unwrap();
        let archive = zip::ZipArchive::new(std::io::Cursor::new(out.into_inner())).unwrap();
        let mut names: Vec<&str> = archive.file_names().collect();
        names.sort();
        assert_eq!(names, vec!["facts.jsonl", "items/i1.json", "readiness.json", "summary.json", "turns.jsonl"]);
    }

    proptest! {
        #[test]
        fn summary_within_budget_and_snippets_from_source(
            texts in proptest::collection::vec("[a-z ]{0,300}", 0..40),
            budget in 0usize..600,
            ref_seed in any::<u64>(),
        ) {
            let turns: Vec<Turn> = texts
                .iter()
                .enumerate()
                .map(|(i, t)| {
                    let i = i as u64;
                    let refs = if i > 0 { vec![ref_seed % i, (ref_seed / 7) % (i + 3)] } else { vec![] };
                    turn(i, t, &refs)
                })
                .collect();
            let sum = summarise(&StudentId::new("a"), &turns, budget);
            prop_assert!(sum.text.chars().count() <= budget);
            prop_assert!(sum.window_end >= sum.window_start);
            for s in &sum.salient_snippets {
                let source = turns.iter().find(|t| t.index == s.turn_index);
                prop_assert!(source.is_some());
                let flat = source.unwrap().text.split_whitespace().collect::<Vec<_>>().join(" ");
                prop_assert!(flat.starts_with(&s.excerpt));
            }
        }
    }
}
