//! Generation backends.
//!
//! A backend is anything that maps `(prompt, seed, budget, capability)` to a
//! reply. The in-process [`MockBackend`] is scripted and fully deterministic;
//! HTTP backends implement the same contract out of process.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::route::GenerationBudget;
use crate::retrieval::SourceBacklink;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Capability {
    TextGen,
    CodeRun,
    FigureRead,
    AudioRead,
    WellbeingScreen,
}

impl fmt::Display for Capability {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// Request body of `POST /generate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct GenerateRequest {
    pub prompt: String,
    pub seed: u64,
    pub budget: GenerationBudget,
    pub capability: Capability,
    /// Grounding passages offered to the backend; citations must come from here.
    #[serde(default)]
    pub sources: Vec<SourceBacklink>,
}

/// Response body of `POST /generate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct GenerateResponse {
    pub text: String,
    #[serde(default)]
    pub citations: Vec<SourceBacklink>,
    /// Backend-specific confidence; `None` is neutral.
    #[serde(default)]
    pub agreement_hint: Option<f64>,
}

#[derive(Debug, Clone, Error, PartialEq, Eq, Serialize, Deserialize)]
pub enum BackendError {
    #[error("backend does not offer capability {0}")]
    Unsupported(Capability),
    #[error("backend call failed: {0}")]
    Failed(String),
}

pub trait GenerationBackend: Send + Sync + fmt::Debug {
    fn name(&self) -> &str;
    fn capabilities(&self) -> BTreeSet<Capability>;
    fn generate(&self, request: &GenerateRequest) -> Result<GenerateResponse, BackendError>;
}

/// How a scripted reply cites the offered sources.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CitePolicy {
    /// Cite every offered source.
    #[default]
    All,
    None,
    /// Cite offered sources from these documents only.
    Documents(Vec<String>),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptEntry {
    /// Case-insensitive substring of the prompt.
    pub pattern: String,
    /// Restricts the entry to one seed; seed-specific entries take priority.
    #[serde(default)]
    pub seed: Option<u64>,
    pub reply: String,
    #[serde(default)]
    pub cite: CitePolicy,
}

impl ScriptEntry {
    pub fn new(pattern: impl Into<String>, reply: impl Into<String>) -> Self {
        Self {
            pattern: pattern.into(),
            seed: None,
            reply: reply.into(),
            cite: CitePolicy::All,
        }
    }

    pub fn for_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }
}

pub const QUESTIONS_ONLY_MARKER: &str = "MODE: questions-only";

/// Deterministic scripted backend. Unmatched prompts get a reply derived
/// from the prompt and offered sources only, never from the seed, so the
/// fallback is stable across samples.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MockBackend {
    #[serde(default)]
    pub script: Vec<ScriptEntry>,
    /// Capabilities beyond `TextGen`, which is always offered.
    #[serde(default)]
    pub extra_capabilities: BTreeSet<Capability>,
}

impl MockBackend {
    pub fn new(script: Vec<ScriptEntry>) -> Self {
        Self {
            script,
            extra_capabilities: BTreeSet::new(),
        }
    }

    pub fn with_capability(mut self, cap: Capability) -> Self {
        self.extra_capabilities.insert(cap);
        self
    }

    fn lookup(&self, prompt: &str, seed: u64) -> Option<&ScriptEntry> {
        let lower = prompt.to_lowercase();
        let matches = |e: &&ScriptEntry| lower.contains(&e.pattern.to_lowercase());
        self.script
            .iter()
            .filter(matches)
            .find(|e| e.seed == Some(seed))
            .or_else(|| self.script.iter().filter(matches).find(|e| e.seed.is_none()))
    }

    fn fallback(request: &GenerateRequest) -> String {
        if request.capability == Capability::WellbeingScreen {
            return "It sounds like you are carrying a lot right now. You do not have to work through this alone."
                .into();
        }
        let query = request
            .prompt
            .split_once("QUERY:\n")
            .map(|(_, q)| q.trim())
            .unwrap_or(request.prompt.trim());
        if request.prompt.contains(QUESTIONS_ONLY_MARKER) {
            return format!(
                "What do you already know about \"{query}\"? Which part of it is least clear to you? What evidence would change your view?"
            );
        }
        match request.sources.first() {
            Some(s) => format!(
                "Based on {} source(s), starting with {}: {}",
                request.sources.len(),
                s.document_id,
                s.quoted_text
            ),
            None => format!("No grounding sources were found for \"{query}\"."),
        }
    }
}

impl GenerationBackend for MockBackend {
    fn name(&self) -> &str {
        "mock"
    }

    fn capabilities(&self) -> BTreeSet<Capability> {
        let mut caps = self.extra_capabilities.clone();
        caps.insert(Capability::TextGen);
        caps
    }

    fn generate(&self, request: &GenerateRequest) -> Result<GenerateResponse, BackendError> {
        if !self.capabilities().contains(&request.capability) {
            return Err(BackendError::Unsupported(request.capability));
        }
        let (text, cite) = match self.lookup(&request.prompt, request.seed) {
            Some(entry) => (entry.reply.clone(), entry.cite.clone()),
            None => (Self::fallback(request), CitePolicy::All),
        };
        let citations = match cite {
            CitePolicy::All => request.sources.clone(),
            CitePolicy::None => Vec::new(),
            CitePolicy::Documents(docs) => request
                .sources
                .iter()
                .filter(|s| docs.iter().any(|d| d == s.document_id.as_str()))
                .cloned()
                .collect(),
        };
        Ok(GenerateResponse {
            text,
            citations,
            agreement_hint: None,
        })
    }
}
