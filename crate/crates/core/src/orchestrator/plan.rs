//! Capability plans: the ordered steps a routed request will run.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::backend::Capability;
use super::route::{BloomLevel, CorpusRef, GenerationBudget, Route, RouteKind};
use crate::canonical::to_canonical_string;
use crate::governance::DigestAlgorithm;
use crate::ids::{DocumentId, PatchId};
use crate::patch_engine::{questioning_transform, CompiledDirectives, Directive, ExcludeTarget, QuestioningLevel};
use crate::retrieval::QueryFilter;

pub const DEFAULT_TOP_K: usize = 3;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GenerationMode {
    #[default]
    Answer,
    QuestionsOnly,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignpostResource {
    pub name: String,
    pub contact: String,
}

impl SignpostResource {
    pub fn new(name: impl Into<String>, contact: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            contact: contact.into(),
        }
    }
}

pub fn default_signposts() -> Vec<SignpostResource> {
    vec![
        SignpostResource::new("University counselling service", "Book through the student wellbeing portal"),
        SignpostResource::new("Urgent support", "If you are in danger, call your local emergency number or a crisis line"),
        SignpostResource::new("Graduate research advisor", "Your Graduate Research School can discuss candidature options"),
    ]
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "step", rename_all = "kebab-case")]
pub enum Step {
    /// Ask the student a question and wait for the reply before generating.
    ClarifyingQuestion,
    Retrieve {
        corpus: CorpusRef,
        filter: QueryFilter,
        required_sources: Vec<DocumentId>,
        top_k: usize,
    },
    ToolExecute {
        capability: Capability,
    },
    Ground,
    Generate {
        capability: Capability,
        mode: GenerationMode,
        budget: GenerationBudget,
        /// Directive instructions in application order.
        directives: Vec<String>,
    },
    Verify {
        require_citations: bool,
    },
    Screen,
    Signpost {
        resources: Vec<SignpostResource>,
    },
}

impl Step {
    pub fn is_generation(&self) -> bool {
        matches!(self, Step::Generate { .. } | Step::ToolExecute { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CapabilityPlan {
    pub route: Route,
    pub steps: Vec<Step>,
    pub directives: CompiledDirectives,
    /// Directives are embedded but not applied (wellbeing plans).
    pub directives_suspended: bool,
    pub questioning: QuestioningLevel,
}

impl CapabilityPlan {
    pub fn digest(&self) -> String {
        let json = to_canonical_string(self).expect("plans serialise");
        DigestAlgorithm::Sha256.digest(json.as_bytes()).to_hex()
    }

    pub fn capabilities(&self) -> BTreeSet<Capability> {
        let mut caps = BTreeSet::new();
        for s in &self.steps {
            match s {
                Step::ToolExecute { capability } | Step::Generate { capability, .. } => {
                    caps.insert(*capability);
                }
                Step::ClarifyingQuestion => {
                    caps.insert(Capability::TextGen);
                }
                _ => {}
            }
        }
        caps
    }

    pub fn retrieval_steps(&self) -> impl Iterator<Item = (&CorpusRef, &QueryFilter)> {
        self.steps.iter().filter_map(|s| match s {
            Step::Retrieve { corpus, filter, .. } => Some((corpus, filter)),
            _ => None,
        })
    }

    pub fn is_questions_only(&self) -> bool {
        self.steps
            .iter()
            .any(|s| matches!(s, Step::Generate { mode: GenerationMode::QuestionsOnly, .. }))
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum PlanError {
    #[error("route is invalid: {0}")]
    InvalidRoute(String),
    #[error("patch {required_by} requires source `{source_id}` that patch {excluded_by} excludes")]
    Contradiction {
        source_id: DocumentId,
        required_by: PatchId,
        excluded_by: PatchId,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Planner {
    pub top_k: usize,
    pub signposts: Vec<SignpostResource>,
}

impl Default for Planner {
    fn default() -> Self {
        Self {
            top_k: DEFAULT_TOP_K,
            signposts: default_signposts(),
        }
    }
}

impl Planner {
    /// The simplest plan that serves the route, with every active directive
    /// embedded. Contradictory directives are an error, never dropped.
    pub fn plan(&self, route: &Route, compiled: &CompiledDirectives) -> Result<CapabilityPlan, PlanError> {
        route.check_invariants().map_err(PlanError::InvalidRoute)?;
        let mut route = route.clone();
        route.constraints.extend(compiled.ids().into_iter().map(|id| format!("patch:{id}")));

        if route.kind == RouteKind::Wellbeing {
            return Ok(CapabilityPlan {
                route,
                steps: vec![
                    Step::Screen,
                    Step::Signpost {
                        resources: self.signposts.clone(),
                    },
                ],
                directives: compiled.clone(),
                directives_suspended: true,
                questioning: QuestioningLevel::Off,
            });
        }

        let mut filter = QueryFilter::default();
        let mut excluded_by = Vec::new();
        let mut required: Vec<DocumentId> = Vec::new();
        let mut required_by = None;
        for a in &compiled.active {
            match &a.directive {
                Directive::Exclude(ExcludeTarget::Source(d)) => {
                    filter.excluded_documents.insert(d.clone());
                    excluded_by.push((d.clone(), a.patch_id.clone()));
                }
                Directive::Exclude(ExcludeTarget::Topic(t)) => {
                    filter.excluded_topics.insert(t.to_lowercase());
                }
                Directive::RequireSources(docs) => {
                    required = docs.clone();
                    required_by = Some(a.patch_id.clone());
                }
                _ => {}
            }
        }
        for doc in &required {
            if let Some((_, by)) = excluded_by.iter().find(|(d, _)| d == doc) {
                return Err(PlanError::Contradiction {
                    source_id: doc.clone(),
                    required_by: required_by.clone().expect("set with required"),
                    excluded_by: by.clone(),
                });
            }
        }

        let mut steps = Vec::new();
        for corpus in &route.corpora {
            steps.push(Step::Retrieve {
                corpus: corpus.clone(),
                filter: filter.clone(),
                required_sources: required.clone(),
                top_k: self.top_k,
            });
        }
        for tool in &route.tools {
            steps.push(Step::ToolExecute { capability: *tool });
        }
        if !route.corpora.is_empty() {
            steps.push(Step::Ground);
        }
        let directives = compiled
            .directives()
            .filter(|d| !matches!(d, Directive::Exclude(_) | Directive::QuestioningMode(_)))
            .map(ToString::to_string)
            .collect();
        steps.push(Step::Generate {
            capability: Capability::TextGen,
            mode: GenerationMode::Answer,
            budget: route.budget,
            directives,
        });
        let require_citations = !route.corpora.is_empty() || !required.is_empty();
        if require_citations {
            steps.push(Step::Verify { require_citations });
        }
        let level = compiled.questioning_level();
        let plan = CapabilityPlan {
            route,
            steps,
            directives: compiled.clone(),
            directives_suspended: false,
            questioning: level,
        };
        Ok(questioning_transform(plan, level))
    }
}

/// Bloom levels at which question-led mode replaces direct answers.
pub fn is_higher_order(level: BloomLevel) -> bool {
    level >= BloomLevel::Analyse
}
