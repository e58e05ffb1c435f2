//! Question-led (Socratic) mode as a plan transformation.

use crate::orchestrator::plan::{is_higher_order, CapabilityPlan, GenerationMode, Step};
use crate::orchestrator::route::RouteKind;

use super::QuestioningLevel;

pub const CLARIFY_INSTRUCTION: &str =
    "Ask the student one short clarifying question about their goal before answering.";

/// `Off` is the identity. `AskFirst` puts a clarifying question in front of
/// the plan. `AskAlways` turns answers into question sequences at analysis
/// level and above; below that it behaves like `AskFirst`.
pub fn questioning_transform(mut plan: CapabilityPlan, level: QuestioningLevel) -> CapabilityPlan {
    if level == QuestioningLevel::Off || plan.route.kind == RouteKind::Wellbeing {
        return plan;
    }
    plan.questioning = level;
    let ask_first = |plan: &mut CapabilityPlan| {
        if !matches!(plan.steps.first(), Some(Step::ClarifyingQuestion)) {
            plan.steps.insert(0, Step::ClarifyingQuestion);
        }
    };
    match level {
        QuestioningLevel::Off => {}
        QuestioningLevel::AskFirst => ask_first(&mut plan),
        QuestioningLevel::AskAlways if is_higher_order(plan.route.bloom_level) => {
            for step in &mut plan.steps {
                if let Step::Generate { mode, .. } = step {
                    *mode = GenerationMode::QuestionsOnly;
                }
            }
        }
        QuestioningLevel::AskAlways => ask_first(&mut plan),
    }
    plan
}
