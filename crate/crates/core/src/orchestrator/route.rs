//! Request routing: a transparent rule cascade over word lexicons.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::backend::Capability;
use crate::ids::StudentId;
use crate::retrieval::text::tokenize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum RouteKind {
    Discipline,
    Policy,
    Multimodal,
    Wellbeing,
    Admin,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum BloomLevel {
    Remember,
    Understand,
    Apply,
    Analyse,
    Evaluate,
    Create,
}

impl BloomLevel {
    pub const ALL: [BloomLevel; 6] = [
        BloomLevel::Remember,
        BloomLevel::Understand,
        BloomLevel::Apply,
        BloomLevel::Analyse,
        BloomLevel::Evaluate,
        BloomLevel::Create,
    ];

    fn from_key(key: &str) -> Option<Self> {
        Some(match key {
            "remember" => BloomLevel::Remember,
            "understand" => BloomLevel::Understand,
            "apply" => BloomLevel::Apply,
            "analyse" | "analyze" => BloomLevel::Analyse,
            "evaluate" => BloomLevel::Evaluate,
            "create" => BloomLevel::Create,
            _ => return None,
        })
    }
}

impl fmt::Display for BloomLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            BloomLevel::Remember => "remember",
            BloomLevel::Understand => "understand",
            BloomLevel::Apply => "apply",
            BloomLevel::Analyse => "analyse",
            BloomLevel::Evaluate => "evaluate",
            BloomLevel::Create => "create",
        };
        f.write_str(s)
    }
}

/// Which corpus a retrieval step reads.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "class", content = "student", rename_all = "kebab-case")]
pub enum CorpusRef {
    Student(StudentId),
    PolicyIndex,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Depth {
    #[default]
    Standard,
    Extended,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GenerationBudget {
    pub samples: u32,
    pub depth: Depth,
    pub max_escalations: u32,
}

impl GenerationBudget {
    pub const SINGLE: GenerationBudget = GenerationBudget {
        samples: 1,
        depth: Depth::Standard,
        max_escalations: 0,
    };

    pub fn voting(samples: u32, max_escalations: u32) -> Self {
        Self {
            samples,
            depth: Depth::Standard,
            max_escalations,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.samples == 0 {
            return Err("samples must be at least 1".into());
        }
        if self.samples > 1 && self.samples.is_multiple_of(2) {
            return Err(format!("voting needs an odd sample count, got {}", self.samples));
        }
        Ok(())
    }
}

/// Budgets by cognitive demand: cheap single answers for lower levels,
/// voted samples for analysis and above.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BudgetPolicy {
    pub lower: GenerationBudget,
    pub higher: GenerationBudget,
}

impl Default for BudgetPolicy {
    fn default() -> Self {
        Self {
            lower: GenerationBudget::SINGLE,
            higher: GenerationBudget::voting(3, 2),
        }
    }
}

impl BudgetPolicy {
    pub fn for_level(&self, level: BloomLevel) -> GenerationBudget {
        if level >= BloomLevel::Analyse {
            self.higher
        } else {
            self.lower
        }
    }
}

pub const SIGNPOSTING_ONLY: &str = "signposting-only";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Route {
    pub kind: RouteKind,
    pub bloom_level: BloomLevel,
    pub corpora: BTreeSet<CorpusRef>,
    /// Route-level constraint ids; patch directive ids are appended at planning.
    pub constraints: Vec<String>,
    pub budget: GenerationBudget,
    /// Tool capabilities the request needs besides text generation.
    #[serde(default)]
    pub tools: BTreeSet<Capability>,
    /// Name of the cascade rule that fired, for the trace.
    pub rule: String,
}

impl Route {
    pub fn check_invariants(&self) -> Result<(), String> {
        match self.kind {
            RouteKind::Policy if self.corpora != BTreeSet::from([CorpusRef::PolicyIndex]) => {
                Err("policy route must read exactly the policy index".into())
            }
            RouteKind::Wellbeing if !self.constraints.iter().any(|c| c == SIGNPOSTING_ONLY) => {
                Err("wellbeing route must carry the signposting-only constraint".into())
            }
            RouteKind::Wellbeing if !self.corpora.is_empty() || !self.tools.is_empty() => {
                Err("wellbeing route may not retrieve or use tools".into())
            }
            _ => self.budget.validate(),
        }
    }
}

/// Context flags from the student's session that influence routing.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RouteContext {
    pub student_id: Option<StudentId>,
    /// Capability needed to read an attachment sent with the query.
    #[serde(default)]
    pub attachment: Option<Capability>,
}

impl RouteContext {
    pub fn for_student(student_id: StudentId) -> Self {
        Self {
            student_id: Some(student_id),
            attachment: None,
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LexiconError {
    #[error("lexicon does not parse: {0}")]
    Parse(String),
    #[error("unknown level `{0}` in lexicon")]
    UnknownLevel(String),
}

/// Phrase lists matched as contiguous token sequences.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PhraseSet(Vec<Vec<String>>);

impl PhraseSet {
    pub fn new<'a>(phrases: impl IntoIterator<Item = &'a str>) -> Self {
        Self(phrases.into_iter().map(tokenize).filter(|p| !p.is_empty()).collect())
    }

    pub fn first_match(&self, tokens: &[String]) -> Option<String> {
        self.0
            .iter()
            .find(|p| tokens.windows(p.len()).any(|w| w == p.as_slice()))
            .map(|p| p.join(" "))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BloomLexicon {
    pub version: String,
    levels: BTreeMap<BloomLevel, PhraseSet>,
}

const DEFAULT_LEXICON: &str = include_str!("../../data/bloom_verbs.toml");

#[derive(Deserialize)]
struct LexiconFile {
    version: String,
    levels: BTreeMap<String, Vec<String>>,
}

impl BloomLexicon {
    pub fn parse(text: &str) -> Result<Self, LexiconError> {
        let file: LexiconFile = toml::from_str(text).map_err(|e| LexiconError::Parse(e.to_string()))?;
        let mut levels = BTreeMap::new();
        for (key, verbs) in &file.levels {
            let level = BloomLevel::from_key(key).ok_or_else(|| LexiconError::UnknownLevel(key.clone()))?;
            levels.insert(level, PhraseSet::new(verbs.iter().map(String::as_str)));
        }
        Ok(Self {
            version: file.version,
            levels,
        })
    }

    pub fn shipped() -> Self {
        Self::parse(DEFAULT_LEXICON).expect("shipped lexicon parses")
    }

    /// Highest matching level, or `None` when no verb matched.
    pub fn level_of(&self, tokens: &[String]) -> Option<BloomLevel> {
        self.levels
            .iter()
            .rev()
            .find(|(_, phrases)| phrases.first_match(tokens).is_some())
            .map(|(level, _)| *level)
    }
}

const WELLBEING: &[&str] = &[
    "overwhelmed", "cant sleep", "cannot sleep", "can not sleep", "anxious", "anxiety",
    "depressed", "depression", "burnout", "burned out", "burnt out", "panic", "lonely",
    "hopeless", "self harm", "suicidal", "suicide", "crying", "exhausted", "cant cope",
    "struggling to cope", "mental health", "wellbeing", "well being", "stressed out",
    "breaking down", "want to quit", "give up on everything", "worthless",
];

const POLICY: &[&str] = &[
    "policy", "policies", "regulation", "regulations", "rule", "rules", "guideline",
    "guidelines", "procedure", "procedures", "candidature", "extension", "extensions",
    "annual leave", "leave of absence", "grs", "graduate research school", "enrolment",
    "enrollment", "suspension", "misconduct", "thesis examination", "examination rules",
];

const MULTIMODAL_FIGURE: &[&str] = &[
    "figure", "plot", "chart", "image", "screenshot", "diagram", "photo", "picture",
];

const MULTIMODAL_AUDIO: &[&str] = &["audio", "recording", "voice memo", "podcast"];

const ADMIN: &[&str] = &[
    "reminder", "remind me", "schedule", "calendar", "meeting", "deadline", "export my",
    "consent", "settings", "account", "delete my", "notification", "notifications",
];

const CODE: &[&str] = &[
    "code", "script", "python", "notebook", "run this", "execute", "compute", "regression",
    "simulate", "simulation",
];

/// Rule cascade: wellbeing, policy, multimodal, admin; discipline otherwise.
/// Wellbeing is checked first so that distress is never routed to tools.
#[derive(Debug, Clone)]
pub struct RouteClassifier {
    pub ruleset_version: String,
    lexicon: BloomLexicon,
    budgets: BudgetPolicy,
    wellbeing: PhraseSet,
    policy: PhraseSet,
    figure: PhraseSet,
    audio: PhraseSet,
    admin: PhraseSet,
    code: PhraseSet,
}

impl Default for RouteClassifier {
    fn default() -> Self {
        Self::new(BloomLexicon::shipped(), BudgetPolicy::default())
    }
}

impl RouteClassifier {
    pub fn new(lexicon: BloomLexicon, budgets: BudgetPolicy) -> Self {
        Self {
            ruleset_version: format!("cascade-1/lexicon-{}", lexicon.version),
            lexicon,
            budgets,
            wellbeing: PhraseSet::new(WELLBEING.iter().copied()),
            policy: PhraseSet::new(POLICY.iter().copied()),
            figure: PhraseSet::new(MULTIMODAL_FIGURE.iter().copied()),
            audio: PhraseSet::new(MULTIMODAL_AUDIO.iter().copied()),
            admin: PhraseSet::new(ADMIN.iter().copied()),
            code: PhraseSet::new(CODE.iter().copied()),
        }
    }

    pub fn budgets(&self) -> &BudgetPolicy {
        &self.budgets
    }

    pub fn classify(&self, query: &str, ctx: &RouteContext) -> Route {
        let tokens = tokenize(query);
        let bloom = self.lexicon.level_of(&tokens).unwrap_or(BloomLevel::Understand);
        let student_corpus = || {
            ctx.student_id
                .as_ref()
                .map(|s| BTreeSet::from([CorpusRef::Student(s.clone())]))
                .unwrap_or_default()
        };
        let mut route = Route {
            kind: RouteKind::Discipline,
            bloom_level: bloom,
            corpora: BTreeSet::new(),
            constraints: Vec::new(),
            budget: self.budgets.for_level(bloom),
            tools: BTreeSet::new(),
            rule: "fallback".into(),
        };

        if let Some(hit) = self.wellbeing.first_match(&tokens) {
            route.kind = RouteKind::Wellbeing;
            route.constraints.push(SIGNPOSTING_ONLY.into());
            route.budget = GenerationBudget::SINGLE;
            route.rule = format!("wellbeing:{hit}");
            return route;
        }
        if let Some(hit) = self.policy.first_match(&tokens) {
            route.kind = RouteKind::Policy;
            route.corpora = BTreeSet::from([CorpusRef::PolicyIndex]);
            route.rule = format!("policy:{hit}");
            return route;
        }
        let figure = self.figure.first_match(&tokens);
        let audio = self.audio.first_match(&tokens);
        if ctx.attachment.is_some() || figure.is_some() || audio.is_some() {
            route.kind = RouteKind::Multimodal;
            route.corpora = student_corpus();
            let cap = ctx.attachment.unwrap_or(if audio.is_some() && figure.is_none() {
                Capability::AudioRead
            } else {
                Capability::FigureRead
            });
            route.tools.insert(cap);
            route.rule = format!(
                "multimodal:{}",
                figure.or(audio).unwrap_or_else(|| "attachment".into())
            );
            return route;
        }
        if let Some(hit) = self.admin.first_match(&tokens) {
            route.kind = RouteKind::Admin;
            route.bloom_level = bloom.min(BloomLevel::Understand);
            route.budget = GenerationBudget::SINGLE;
            route.rule = format!("admin:{hit}");
            return route;
        }
        route.corpora = student_corpus();
        if let Some(hit) = self.code.first_match(&tokens) {
            route.tools.insert(Capability::CodeRun);
            route.rule = format!("discipline:code:{hit}");
        } else {
            route.rule = "discipline".into();
        }
        route
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn classify(q: &str) -> Route {
        let r = RouteClassifier::default().classify(q, &RouteContext::for_student(StudentId::new("alice")));
        r.check_invariants().unwrap();
        r
    }

    #[test]
    fn policy_query_reads_only_policy_index() {
        let r = classify("what does the policy say about annual leave during candidature");
        assert_eq!(r.kind, RouteKind::Policy);
        assert_eq!(r.corpora, BTreeSet::from([CorpusRef::PolicyIndex]));
    }

    #[test]
    fn distress_routes_to_wellbeing() {
        let r = classify("I feel overwhelmed and can't sleep");
        assert_eq!(r.kind, RouteKind::Wellbeing);
        assert!(r.constraints.contains(&SIGNPOSTING_ONLY.to_string()));
        assert!(r.corpora.is_empty());
    }

    #[test]
    fn highest_bloom_verb_wins() {
        let r = classify("compare these two ANOVA outputs and critique my interpretation");
        assert_eq!(r.kind, RouteKind::Discipline);
        assert_eq!(r.bloom_level, BloomLevel::Evaluate);
        assert_eq!(r.budget.samples, 3);
    }

    #[test]
    fn fallback_is_discipline_understand() {
        let r = classify("thermodynamics");
        assert_eq!((r.kind, r.bloom_level), (RouteKind::Discipline, BloomLevel::Understand));
        assert_eq!(r.corpora, BTreeSet::from([CorpusRef::Student(StudentId::new("alice"))]));
    }

    #[test]
    fn wellbeing_beats_policy() {
        let r = classify("the extension policy is making me anxious");
        assert_eq!(r.kind, RouteKind::Wellbeing);
    }

    #[test]
    fn multimodal_and_code_tools() {
        let r = classify("explain this figure of residuals");
        assert_eq!(r.kind, RouteKind::Multimodal);
        assert!(r.tools.contains(&Capability::FigureRead));
        let r = classify("run this python regression on my data");
        assert_eq!(r.kind, RouteKind::Discipline);
        assert!(r.tools.contains(&Capability::CodeRun));
    }

    #[test]
    fn lexicon_rejects_unknown_levels() {
        assert!(matches!(
            BloomLexicon::parse("version = \"x\"\n[levels]\nponder = [\"muse\"]\n"),
            Err(LexiconError::UnknownLevel(_))
        ));
    }

    #[test]
    fn classification_is_deterministic() {
        let q = "design a study to evaluate feedback timeliness";
        assert_eq!(classify(q), classify(q));
        assert_eq!(classify(q).bloom_level, BloomLevel::Create);
    }
}
