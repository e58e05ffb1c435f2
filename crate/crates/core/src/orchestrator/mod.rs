//! Routing and generation core.
//!
//! A request is classified to a [`Route`], planned into an ordered
//! [`CapabilityPlan`] with every active patch directive embedded, and then
//! executed against a [`GenerationBackend`]: retrieval over the permitted
//! corpora, grounding, sampled generation with self-consistency voting, and
//! citation verification.

pub mod backend;
pub mod plan;
pub mod route;
pub mod scaling;

use std::collections::BTreeSet;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use backend::{
    BackendError, Capability, CitePolicy, GenerateRequest, GenerateResponse, GenerationBackend, MockBackend,
    ScriptEntry, QUESTIONS_ONLY_MARKER,
};
pub use plan::{CapabilityPlan, GenerationMode, PlanError, Planner, SignpostResource, Step};
pub use route::{
    BloomLevel, BudgetPolicy, CorpusRef, Depth, GenerationBudget, Route, RouteClassifier, RouteContext, RouteKind,
    SIGNPOSTING_ONLY,
};
pub use scaling::{
    canonicalize, generate_with_scaling, needs_escalation, self_consistency, EscalationPolicy, GenerationTrace,
    VoteOutcome,
};

use crate::ids::{DocumentId, PatchId};
use crate::patch_engine::CLARIFY_INSTRUCTION;
use crate::retrieval::{Hit, PassageIndex, PolicyIndexHandle, SourceBacklink};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum OrchestratorError {
    #[error("query is empty")]
    EmptyQuery,
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error("no backend offers capability {0}")]
    MissingCapability(Capability),
    #[error("backend failed: {error}")]
    Backend {
        error: BackendError,
        partial: Box<ResponseTrace>,
    },
}

/// The indexes a request may read. The policy side is a typed handle, so
/// only a policy-class index can ever serve a policy retrieval.
#[derive(Debug, Clone, Copy)]
pub struct RetrievalSources<'a> {
    pub student: Option<&'a PassageIndex>,
    pub policy: &'a PolicyIndexHandle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalRecord {
    pub corpus: CorpusRef,
    pub hits: Vec<SourceBacklink>,
    pub scores: Vec<f64>,
    /// Passages the injection guard withheld.
    pub quarantined: Vec<SourceBacklink>,
    pub excluded_documents: Vec<DocumentId>,
    /// Required sources with no passage available in this corpus.
    pub missing_required: Vec<DocumentId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolRecord {
    pub capability: Capability,
    pub output: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ResponseTrace {
    pub plan_digest: String,
    pub route_rule: String,
    pub steps: Vec<String>,
    pub retrievals: Vec<RetrievalRecord>,
    pub tools: Vec<ToolRecord>,
    #[serde(default)]
    pub generation: Option<GenerationTrace>,
    pub active_patches: Vec<PatchId>,
    pub shadowed_patches: Vec<PatchId>,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssistantResponse {
    pub trace_id: String,
    pub text: String,
    pub backlinks: Vec<SourceBacklink>,
    pub route: Route,
    pub mode: GenerationMode,
    /// The response is a clarifying question; the next student turn is the reply.
    pub awaiting_reply: bool,
    /// No two-thirds majority after all escalations; needs human review.
    pub contested: bool,
    pub signposts: Vec<SignpostResource>,
    pub trace: ResponseTrace,
}

/// What the executor needs beyond the plan.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct QueryInput {
    pub query: String,
    /// Rolling conversation summary for long-session coherence.
    pub summary: String,
    /// The student's reply to a pending clarifying question.
    pub clarification: Option<String>,
    /// WellbeingScreening consent; without it the screen step never calls
    /// the backend and only signposts.
    pub screening_consent: bool,
}

#[derive(Debug, Clone)]
pub struct Orchestrator {
    pub classifier: RouteClassifier,
    pub planner: Planner,
    pub escalation: EscalationPolicy,
    backend: Arc<dyn GenerationBackend>,
}

const FALLBACK_QUESTION: &str = "What is your current thinking here, and what evidence supports it?";
const FALLBACK_SCREEN: &str = "Thank you for telling me how you are feeling. You do not have to work through this alone.";

/// Keeps only the sentences that are questions.
pub fn questions_only(text: &str) -> String {
    let mut out = Vec::new();
    let mut current = String::new();
    for ch in text.chars() {
        current.push(ch);
        if matches!(ch, '.' | '!' | '?' | '\n') {
            let s = current.trim();
            if s.ends_with('?') {
                out.push(s.to_owned());
            }
            current.clear();
        }
    }
    if out.is_empty() {
        FALLBACK_QUESTION.to_owned()
    } else {
        out.join(" ")
    }
}

impl Orchestrator {
    pub fn new(backend: Arc<dyn GenerationBackend>) -> Self {
        Self {
            classifier: RouteClassifier::default(),
            planner: Planner::default(),
            escalation: EscalationPolicy::default(),
            backend,
        }
    }

    pub fn backend(&self) -> &Arc<dyn GenerationBackend> {
        &self.backend
    }

    pub fn classify(&self, query: &str, ctx: &RouteContext) -> Result<Route, OrchestratorError> {
        if query.trim().is_empty() {
            return Err(OrchestratorError::EmptyQuery);
        }
        Ok(self.classifier.classify(query, ctx))
    }

    fn prompt(plan: &CapabilityPlan, input: &QueryInput, mode: GenerationMode, sources: &[Hit], tools: &[ToolRecord]) -> String {
        let mut p = String::new();
        p.push_str(match mode {
            GenerationMode::Answer => "MODE: answer\n",
            GenerationMode::QuestionsOnly => "MODE: questions-only\n",
        });
        p.push_str(&format!(
            "ROUTE: {:?}/{}\n",
            plan.route.kind, plan.route.bloom_level
        ));
        let directives: Vec<&String> = plan
            .steps
            .iter()
            .filter_map(|s| match s {
                Step::Generate { directives, .. } => Some(directives),
                _ => None,
            })
            .flatten()
            .collect();
        if !directives.is_empty() {
            p.push_str("DIRECTIVES:\n");
            for d in directives {
                p.push_str(&format!("- {d}\n"));
            }
        }
        if !input.summary.is_empty() {
            p.push_str(&format!("CONVERSATION SUMMARY:\n{}\n", input.summary));
        }
        if !sources.is_empty() {
            p.push_str("SOURCES:\n");
            for (i, h) in sources.iter().enumerate() {
                p.push_str(&format!(
                    "[{}] {} v{} {}..{}: {}\n",
                    i + 1,
                    h.backlink.document_id,
                    h.backlink.document_version,
                    h.backlink.passage_span.0,
                    h.backlink.passage_span.1,
                    h.passage
                ));
            }
        }
        for t in tools {
            p.push_str(&format!("TOOL OUTPUT ({}):\n{}\n", t.capability, t.output));
        }
        if let Some(c) = &input.clarification {
            p.push_str(&format!("STUDENT CLARIFICATION:\n{c}\n"));
        }
        p.push_str(&format!("QUERY:\n{}", input.query));
        p
    }

    fn retrieve(
        corpus: &CorpusRef,
        filter: &crate::retrieval::QueryFilter,
        required: &[DocumentId],
        top_k: usize,
        query: &str,
        sources: RetrievalSources<'_>,
    ) -> (Vec<Hit>, RetrievalRecord) {
        let index = match corpus {
            CorpusRef::PolicyIndex => Some(sources.policy.index()),
            CorpusRef::Student(_) => sources.student,
        };
        let mut record = RetrievalRecord {
            corpus: corpus.clone(),
            hits: Vec::new(),
            scores: Vec::new(),
            quarantined: Vec::new(),
            excluded_documents: filter.excluded_documents.iter().cloned().collect(),
            missing_required: Vec::new(),
        };
        let Some(index) = index else {
            record.missing_required = required.to_vec();
            return (Vec::new(), record);
        };
        let result = index.query_filtered(query, top_k, filter);
        let mut hits = result.hits;
        record.quarantined = result.quarantined;
        for doc in required {
            if hits.iter().any(|h| &h.backlink.document_id == doc) {
                continue;
            }
            match index.best_in_document(doc, query) {
                Some(h) if filter.allows(doc, &h.passage) => hits.push(h),
                _ => record.missing_required.push(doc.clone()),
            }
        }
        record.hits = hits.iter().map(|h| h.backlink.clone()).collect();
        record.scores = hits.iter().map(|h| h.score).collect();
        (hits, record)
    }

    /// Runs a plan. Pure given `(plan, input, indexes, seed)` and a
    /// deterministic backend.
    pub fn execute(
        &self,
        plan: &CapabilityPlan,
        input: &QueryInput,
        sources: RetrievalSources<'_>,
        seed: u64,
        trace_id: impl Into<String>,
    ) -> Result<AssistantResponse, OrchestratorError> {
        let offered = self.backend.capabilities();
        if let Some(missing) = plan.capabilities().into_iter().find(|c| !offered.contains(c)) {
            return Err(OrchestratorError::MissingCapability(missing));
        }
        let mut trace = ResponseTrace {
            plan_digest: plan.digest(),
            route_rule: plan.route.rule.clone(),
            active_patches: plan.directives.active.iter().map(|a| a.patch_id.clone()).collect(),
            shadowed_patches: plan.directives.shadowed.iter().map(|s| s.patch_id.clone()).collect(),
            ..ResponseTrace::default()
        };
        if plan.directives_suspended && !plan.directives.active.is_empty() {
            trace.notes.push("patch directives suspended on this route".into());
        }
        let mut response = AssistantResponse {
            trace_id: trace_id.into(),
            text: String::new(),
            backlinks: Vec::new(),
            route: plan.route.clone(),
            mode: GenerationMode::Answer,
            awaiting_reply: false,
            contested: false,
            signposts: Vec::new(),
            trace: ResponseTrace::default(),
        };
        let mut grounding: Vec<Hit> = Vec::new();
        let mut declared: Option<Vec<SourceBacklink>> = None;
        let mut screen_text = None;
        let backend_err = |error, trace: &ResponseTrace| OrchestratorError::Backend {
            error,
            partial: Box::new(trace.clone()),
        };

        for step in &plan.steps {
            match step {
                Step::ClarifyingQuestion => {
                    trace.steps.push("clarifying-question".into());
                    if input.clarification.is_some() {
                        continue;
                    }
                    let prompt = format!(
                        "{QUESTIONS_ONLY_MARKER}\nINSTRUCTION: {CLARIFY_INSTRUCTION}\nQUERY:\n{}",
                        input.query
                    );
                    let req = GenerateRequest {
                        prompt,
                        seed,
                        budget: GenerationBudget::SINGLE,
                        capability: Capability::TextGen,
                        sources: Vec::new(),
                    };
                    let reply = self.backend.generate(&req).map_err(|e| backend_err(e, &trace))?;
                    response.text = questions_only(&reply.text);
                    response.mode = GenerationMode::QuestionsOnly;
                    response.awaiting_reply = true;
                    response.trace = trace;
                    return Ok(response);
                }
                Step::Retrieve {
                    corpus,
                    filter,
                    required_sources,
                    top_k,
                } => {
                    trace.steps.push("retrieve".into());
                    let query = match &input.clarification {
                        Some(c) => format!("{} {c}", input.query),
                        None => input.query.clone(),
                    };
                    let (hits, record) = Self::retrieve(corpus, filter, required_sources, *top_k, &query, sources);
                    if !record.missing_required.is_empty() {
                        trace.notes.push(format!(
                            "required sources unavailable in {corpus:?}: {}",
                            record.missing_required.iter().map(|d| d.as_str()).collect::<Vec<_>>().join(", ")
                        ));
                    }
                    grounding.extend(hits);
                    trace.retrievals.push(record);
                }
                Step::ToolExecute { capability } => {
                    trace.steps.push(format!("tool:{capability}"));
                    let req = GenerateRequest {
                        prompt: format!("TOOL: {capability}\nQUERY:\n{}", input.query),
                        seed,
                        budget: GenerationBudget::SINGLE,
                        capability: *capability,
                        sources: Vec::new(),
                    };
                    let out = self.backend.generate(&req).map_err(|e| backend_err(e, &trace))?;
                    trace.tools.push(ToolRecord {
                        capability: *capability,
                        output: out.text,
                    });
                }
                Step::Ground => {
                    trace.steps.push("ground".into());
                    // dedupe across corpora while keeping rank order
                    let mut seen = BTreeSet::new();
                    grounding.retain(|h| seen.insert(h.backlink.clone()));
                }
                Step::Generate {
                    capability,
                    mode,
                    budget,
                    ..
                } => {
                    trace.steps.push("generate".into());
                    let prompt = Self::prompt(plan, input, *mode, &grounding, &trace.tools);
                    let offered: Vec<SourceBacklink> = grounding.iter().map(|h| h.backlink.clone()).collect();
                    let out = generate_with_scaling(
                        self.backend.as_ref(),
                        &prompt,
                        &offered,
                        *capability,
                        *budget,
                        seed,
                        self.escalation,
                    )
                    .map_err(|f| {
                        trace.generation = Some(f.partial);
                        backend_err(f.error, &trace)
                    })?;
                    response.text = match mode {
                        GenerationMode::Answer => out.text,
                        GenerationMode::QuestionsOnly => questions_only(&out.text),
                    };
                    response.mode = *mode;
                    response.contested = out.contested;
                    if out.contested {
                        trace.notes.push("contested: no two-thirds majority; flagged for human review".into());
                    }
                    declared = Some(out.citations);
                    trace.generation = Some(out.trace);
                }
                Step::Verify { require_citations } => {
                    trace.steps.push("verify".into());
                    let retrieved: Vec<&SourceBacklink> = grounding.iter().map(|h| &h.backlink).collect();
                    let declared = declared.take().unwrap_or_default();
                    let (valid, dropped): (Vec<_>, Vec<_>) =
                        declared.into_iter().partition(|c| retrieved.contains(&c));
                    if !dropped.is_empty() {
                        trace.notes.push(format!("dropped {} citation(s) not among retrieved passages", dropped.len()));
                    }
                    let mut links = Vec::new();
                    for c in valid {
                        if !links.contains(&c) {
                            links.push(c);
                        }
                    }
                    if links.is_empty() && *require_citations {
                        if retrieved.is_empty() {
                            trace.notes.push("ungrounded: no passages retrieved".into());
                        } else {
                            trace.notes.push("backend declared no citations; grounding passages attached".into());
                            links = retrieved.into_iter().cloned().collect();
                        }
                    }
                    response.backlinks = links;
                }
                Step::Screen => {
                    trace.steps.push("screen".into());
                    let text = if input.screening_consent && offered.contains(&Capability::WellbeingScreen) {
                        let req = GenerateRequest {
                            prompt: format!("SCREEN:\n{}", input.query),
                            seed,
                            budget: GenerationBudget::SINGLE,
                            capability: Capability::WellbeingScreen,
                            sources: Vec::new(),
                        };
                        self.backend.generate(&req).map_err(|e| backend_err(e, &trace))?.text
                    } else {
                        FALLBACK_SCREEN.to_owned()
                    };
                    screen_text = Some(text);
                }
                Step::Signpost { resources } => {
                    trace.steps.push("signpost".into());
                    let mut text = screen_text.take().unwrap_or_else(|| FALLBACK_SCREEN.to_owned());
                    text.push_str("\n\nSupport available:");
                    for r in resources {
                        text.push_str(&format!("\n- {}: {}", r.name, r.contact));
                    }
                    response.text = text;
                    response.signposts = resources.clone();
                }
            }
        }
        response.trace = trace;
        Ok(response)
    }
}
