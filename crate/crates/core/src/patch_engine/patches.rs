//! Behaviour patches and their compilation into active directives.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::PatchError;
use crate::ids::{ActorId, CaseId, DocumentId, ItemId, PatchId, StudentId};
use crate::time::Timestamp;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum QuestioningLevel {
    #[default]
    Off,
    AskFirst,
    AskAlways,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExcludeTarget {
    Source(DocumentId),
    Topic(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value")]
pub enum Directive {
    RequireSources(Vec<DocumentId>),
    PreferMethod(String),
    ScopeLimit(String),
    Tone(String),
    Exclude(ExcludeTarget),
    QuestioningMode(QuestioningLevel),
}

impl Directive {
    /// Conflict key: two directives with the same key compete and the later
    /// one wins. Exclusions are keyed by target so they accumulate.
    pub fn key(&self) -> String {
        match self {
            Directive::RequireSources(_) => "require-sources".into(),
            Directive::PreferMethod(_) => "prefer-method".into(),
            Directive::ScopeLimit(_) => "scope-limit".into(),
            Directive::Tone(_) => "tone".into(),
            Directive::Exclude(ExcludeTarget::Source(s)) => format!("exclude:source:{s}"),
            Directive::Exclude(ExcludeTarget::Topic(t)) => format!("exclude:topic:{}", t.to_lowercase()),
            Directive::QuestioningMode(_) => "questioning-mode".into(),
        }
    }

    pub fn validate(&self) -> Result<(), PatchError> {
        let empty = |s: &str| s.trim().is_empty();
        let bad = match self {
            Directive::RequireSources(v) => v.is_empty() || v.iter().any(|d| empty(d.as_str())),
            Directive::PreferMethod(s) | Directive::ScopeLimit(s) | Directive::Tone(s) => empty(s),
            Directive::Exclude(ExcludeTarget::Source(d)) => empty(d.as_str()),
            Directive::Exclude(ExcludeTarget::Topic(t)) => empty(t),
            Directive::QuestioningMode(_) => false,
        };
        if bad {
            return Err(PatchError::EmptyDirective(self.key()));
        }
        Ok(())
    }
}

impl fmt::Display for Directive {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Directive::RequireSources(v) => {
                let ids: Vec<&str> = v.iter().map(DocumentId::as_str).collect();
                write!(f, "cite these sources: {}", ids.join(", "))
            }
            Directive::PreferMethod(m) => write!(f, "prefer the method: {m}"),
            Directive::ScopeLimit(s) => write!(f, "stay within scope: {s}"),
            Directive::Tone(t) => write!(f, "use a {t} tone"),
            Directive::Exclude(ExcludeTarget::Source(s)) => write!(f, "do not use source {s}"),
            Directive::Exclude(ExcludeTarget::Topic(t)) => write!(f, "avoid the topic: {t}"),
            Directive::QuestioningMode(QuestioningLevel::Off) => f.write_str("answer directly"),
            Directive::QuestioningMode(QuestioningLevel::AskFirst) => {
                f.write_str("ask a clarifying question before answering")
            }
            Directive::QuestioningMode(QuestioningLevel::AskAlways) => {
                f.write_str("respond with guiding questions on higher-order tasks")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", content = "topic", rename_all = "kebab-case")]
pub enum PatchScope {
    Global,
    Topic(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BehaviourPatch {
    pub id: PatchId,
    pub author_id: ActorId,
    pub student_id: StudentId,
    pub scope: PatchScope,
    pub directive: Directive,
    /// Free-text constraint as the supervisor wrote it.
    pub body: String,
    pub attached_at: Timestamp,
    #[serde(default)]
    pub supersedes: Option<PatchId>,
    #[serde(default)]
    pub superseded_by: Option<PatchId>,
}

/// What a supervisor submits; the registry assigns id and time.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchDraft {
    pub scope: PatchScope,
    pub directive: Directive,
    #[serde(default)]
    pub body: String,
    #[serde(default)]
    pub supersedes: Option<PatchId>,
}

impl PatchDraft {
    pub fn global(directive: Directive) -> Self {
        Self {
            scope: PatchScope::Global,
            directive,
            body: String::new(),
            supersedes: None,
        }
    }

    pub fn topic(topic: impl Into<String>, directive: Directive) -> Self {
        Self {
            scope: PatchScope::Topic(topic.into()),
            ..Self::global(directive)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyUpdate {
    pub id: String,
    #[serde(default)]
    pub patch_id: Option<PatchId>,
    pub feedback_text: String,
    pub artefact_id: ItemId,
    #[serde(default)]
    pub case_id: Option<CaseId>,
    pub recorded_at: Timestamp,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActiveDirective {
    pub patch_id: PatchId,
    pub scope: PatchScope,
    pub directive: Directive,
    pub attached_at: Timestamp,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShadowedDirective {
    pub patch_id: PatchId,
    pub directive: Directive,
    pub shadowed_by: PatchId,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompiledDirectives {
    pub active: Vec<ActiveDirective>,
    pub shadowed: Vec<ShadowedDirective>,
}

impl CompiledDirectives {
    pub fn directives(&self) -> impl Iterator<Item = &Directive> {
        self.active.iter().map(|a| &a.directive)
    }

    pub fn questioning_level(&self) -> QuestioningLevel {
        self.directives()
            .find_map(|d| match d {
                Directive::QuestioningMode(l) => Some(*l),
                _ => None,
            })
            .unwrap_or_default()
    }

    pub fn ids(&self) -> Vec<String> {
        self.active.iter().map(|a| a.patch_id.to_string()).collect()
    }
}

/// One student's patches, in attachment order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchRegistry {
    patches: Vec<BehaviourPatch>,
}

impl PatchRegistry {
    pub fn patches(&self) -> &[BehaviourPatch] {
        &self.patches
    }

    pub fn get(&self, id: &PatchId) -> Option<&BehaviourPatch> {
        self.patches.iter().find(|p| &p.id == id)
    }

    pub fn attach(
        &mut self,
        id: PatchId,
        author: ActorId,
        student: StudentId,
        draft: PatchDraft,
        at: Timestamp,
    ) -> Result<&BehaviourPatch, PatchError> {
        draft.directive.validate()?;
        if let PatchScope::Topic(t) = &draft.scope {
            if t.trim().is_empty() {
                return Err(PatchError::EmptyTopic);
            }
        }
        if self.get(&id).is_some() {
            return Err(PatchError::DuplicatePatch(id));
        }
        if let Some(old_id) = &draft.supersedes {
            let old = self.get(old_id).ok_or_else(|| PatchError::NotFound(old_id.clone()))?;
            if old.student_id != student {
                return Err(PatchError::ForeignSupersession(old_id.clone()));
            }
            if let Some(by) = &old.superseded_by {
                return Err(PatchError::AlreadySuperseded {
                    patch: old_id.clone(),
                    by: by.clone(),
                });
            }
        }
        if let Some(old_id) = &draft.supersedes {
            let old = self.patches.iter_mut().find(|p| &p.id == old_id).expect("checked above");
            old.superseded_by = Some(id.clone());
        }
        self.patches.push(BehaviourPatch {
            id,
            author_id: author,
            student_id: student,
            scope: draft.scope,
            directive: draft.directive,
            body: draft.body,
            attached_at: at,
            supersedes: draft.supersedes,
            superseded_by: None,
        });
        Ok(self.patches.last().expect("just pushed"))
    }

    /// Active and shadowed directives for `(student, topic)` as of `as_of`.
    pub fn compile(&self, student: &StudentId, topic: Option<&str>, as_of: Timestamp) -> CompiledDirectives {
        compile_directives(&self.patches, student, topic, as_of)
    }
}

fn superseded_as_of(patches: &[BehaviourPatch], p: &BehaviourPatch, as_of: Timestamp) -> bool {
    patches
        .iter()
        .any(|q| q.supersedes.as_ref() == Some(&p.id) && q.attached_at <= as_of)
}

/// Pure compilation over any patch set. Global patches come first, then
/// topic patches, each by attachment time; per conflict key the latest
/// attachment wins and the others are reported as shadowed.
pub fn compile_directives(
    patches: &[BehaviourPatch],
    student: &StudentId,
    topic: Option<&str>,
    as_of: Timestamp,
) -> CompiledDirectives {
    let topic = topic.map(str::to_lowercase);
    let mut matching: Vec<(usize, &BehaviourPatch)> = patches
        .iter()
        .enumerate()
        .filter(|(_, p)| &p.student_id == student && p.attached_at <= as_of)
        .filter(|(_, p)| match &p.scope {
            PatchScope::Global => true,
            PatchScope::Topic(t) => topic.as_deref() == Some(t.to_lowercase().as_str()),
        })
        .filter(|(_, p)| !superseded_as_of(patches, p, as_of))
        .collect();
    matching.sort_by_key(|(i, p)| (!matches!(p.scope, PatchScope::Global), p.attached_at, *i));

    let mut winner: BTreeMap<String, (Timestamp, usize, &PatchId)> = BTreeMap::new();
    for (i, p) in &matching {
        let key = p.directive.key();
        let candidate = (p.attached_at, *i, &p.id);
        winner
            .entry(key)
            .and_modify(|w| {
                if (candidate.0, candidate.1) > (w.0, w.1) {
                    *w = candidate;
                }
            })
            .or_insert(candidate);
    }
    let mut out = CompiledDirectives::default();
    for (_, p) in matching {
        let w = winner[&p.directive.key()].2;
        if w == &p.id {
            out.active.push(ActiveDirective {
                patch_id: p.id.clone(),
                scope: p.scope.clone(),
                directive: p.directive.clone(),
                attached_at: p.attached_at,
            });
        } else {
            out.shadowed.push(ShadowedDirective {
                patch_id: p.id.clone(),
                directive: p.directive.clone(),
                shadowed_by: w.clone(),
            });
        }
    }
    out
}

/// Plain-language digest of the rules shaping a student's assistant.
pub fn render_digest(registry: &PatchRegistry, student: &StudentId, as_of: Timestamp) -> String {
    let mut lines = vec![format!("Rules shaping the assistant for {student}:")];
    let live: Vec<&BehaviourPatch> = registry
        .patches()
        .iter()
        .filter(|p| &p.student_id == student && p.attached_at <= as_of)
        .filter(|p| !superseded_as_of(registry.patches(), p, as_of))
        .collect();
    if live.is_empty() {
        lines.push("  (none)".into());
    }
    for p in live {
        let scope = match &p.scope {
            PatchScope::Global => "all topics".to_owned(),
            PatchScope::Topic(t) => format!("topic `{t}`"),
        };
        let mut line = format!("  - [{}] {} ({scope}; set by {})", p.id, p.directive, p.author_id);
        if !p.body.is_empty() {
            line.push_str(&format!(": \"{}\"", p.body));
        }
        lines.push(line);
    }
    let mut text = lines.join("\n");
    text.push('\n');
    text
}
