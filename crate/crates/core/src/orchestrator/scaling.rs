//! Inference-time scaling: sampling, self-consistency voting and escalation.

use serde::{Deserialize, Serialize};

use super::backend::{BackendError, Capability, GenerateRequest, GenerateResponse, GenerationBackend};
use super::route::{Depth, GenerationBudget};
use crate::retrieval::SourceBacklink;

/// Lowercase, collapse whitespace and drop punctuation.
pub fn canonicalize(text: &str) -> String {
    text.chars()
        .filter(|c| !c.is_ascii_punctuation() && !matches!(c, '‘' | '’' | '“' | '”' | '–' | '—' | '…'))
        .flat_map(char::to_lowercase)
        .collect::<String>()
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoteOutcome {
    /// Index of the first sample in the winning class.
    pub winner_index: usize,
    pub winner: String,
    pub count: usize,
    pub total: usize,
    pub agreement_ratio: f64,
}

/// Modal canonical response; ties go to the class seen first.
pub fn self_consistency<S: AsRef<str>>(responses: &[S]) -> Option<VoteOutcome> {
    let canon: Vec<String> = responses.iter().map(|r| canonicalize(r.as_ref())).collect();
    // (first index, count) per class, in order of first appearance
    let mut classes: Vec<(usize, usize)> = Vec::new();
    for (i, c) in canon.iter().enumerate() {
        match classes.iter_mut().find(|(first, _)| &canon[*first] == c) {
            Some(entry) => entry.1 += 1,
            None => classes.push((i, 1)),
        }
    }
    let (winner_index, count) = classes
        .iter()
        .copied()
        .reduce(|best, next| if next.1 > best.1 { next } else { best })?;
    let total = responses.len();
    Some(VoteOutcome {
        winner_index,
        winner: responses[winner_index].as_ref().to_owned(),
        count,
        total,
        agreement_ratio: count as f64 / total as f64,
    })
}

/// Agreement below two thirds of the samples, i.e. `count < ceil(2n/3)`.
pub fn needs_escalation(count: usize, total: usize) -> bool {
    3 * count < 2 * total
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EscalationPolicy {
    /// Samples added per escalation; even, so odd counts stay odd.
    pub step: u32,
    /// Beyond this many samples, new samples run at extended depth.
    pub standard_sample_cap: u32,
}

impl Default for EscalationPolicy {
    fn default() -> Self {
        Self {
            step: 2,
            standard_sample_cap: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub index: usize,
    pub seed: u64,
    pub depth: Depth,
    pub text: String,
    pub citations: Vec<SourceBacklink>,
    pub agreement_hint: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoteRecord {
    pub round: u32,
    pub samples: usize,
    pub winner_index: usize,
    pub count: usize,
    pub agreement_ratio: f64,
    pub escalate: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EscalationRecord {
    pub round: u32,
    pub samples_before: u32,
    pub samples_after: u32,
    pub depth: Depth,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GenerationTrace {
    pub samples: Vec<SampleRecord>,
    pub votes: Vec<VoteRecord>,
    pub escalations: Vec<EscalationRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaledOutput {
    pub text: String,
    pub citations: Vec<SourceBacklink>,
    /// Escalations ran out without a two-thirds majority.
    pub contested: bool,
    pub trace: GenerationTrace,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalingFailure {
    pub error: BackendError,
    pub partial: GenerationTrace,
}

/// Draws `budget.samples` samples (seeds `base_seed + i`), votes, and while
/// agreement stays under two thirds adds `policy.step` more samples, up to
/// `budget.max_escalations` times. Earlier samples are kept and re-voted.
pub fn generate_with_scaling(
    backend: &dyn GenerationBackend,
    prompt: &str,
    sources: &[SourceBacklink],
    capability: Capability,
    budget: GenerationBudget,
    base_seed: u64,
    policy: EscalationPolicy,
) -> Result<ScaledOutput, ScalingFailure> {
    let mut trace = GenerationTrace::default();
    let mut current = budget;
    let draw = |trace: &mut GenerationTrace, n: u32, depth: Depth, current: GenerationBudget| {
        for _ in 0..n {
            let index = trace.samples.len();
            let seed = base_seed.wrapping_add(index as u64);
            let request = GenerateRequest {
                prompt: prompt.to_owned(),
                seed,
                budget: GenerationBudget { depth, ..current },
                capability,
                sources: sources.to_vec(),
            };
            let GenerateResponse {
                text,
                citations,
                agreement_hint,
            } = backend.generate(&request)?;
            trace.samples.push(SampleRecord {
                index,
                seed,
                depth,
                text,
                citations,
                agreement_hint,
            });
        }
        Ok::<(), BackendError>(())
    };

    let fail = |error, trace: GenerationTrace| ScalingFailure { error, partial: trace };
    if let Err(e) = draw(&mut trace, current.samples.max(1), current.depth, current) {
        return Err(fail(e, trace));
    }
    let mut round = 0u32;
    loop {
        let texts: Vec<&str> = trace.samples.iter().map(|s| s.text.as_str()).collect();
        let vote = self_consistency(&texts).expect("at least one sample");
        let disagree = trace.samples.len() > 1 && needs_escalation(vote.count, vote.total);
        let can_escalate = round < budget.max_escalations;
        trace.votes.push(VoteRecord {
            round,
            samples: vote.total,
            winner_index: vote.winner_index,
            count: vote.count,
            agreement_ratio: vote.agreement_ratio,
            escalate: disagree && can_escalate,
        });
        if !disagree || !can_escalate {
            let winner = &trace.samples[vote.winner_index];
            return Ok(ScaledOutput {
                text: winner.text.clone(),
                citations: winner.citations.clone(),
                contested: disagree,
                trace,
            });
        }
        round += 1;
        let before = current.samples;
        current.samples += policy.step;
        if current.samples > policy.standard_sample_cap {
            current.depth = Depth::Extended;
        }
        trace.escalations.push(EscalationRecord {
            round,
            samples_before: before,
            samples_after: current.samples,
            depth: current.depth,
        });
        if let Err(e) = draw(&mut trace, policy.step, current.depth, current) {
            return Err(fail(e, trace));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::orchestrator::backend::{MockBackend, ScriptEntry};

    #[test]
    fn canonical_form() {
        assert_eq!(canonicalize("  The Answer,  is 42! "), "the answer is 42");
    }

    #[test]
    fn vote_examples() {
        let v = self_consistency(&["A"]).unwrap();
        assert_eq!((v.winner.as_str(), v.agreement_ratio), ("A", 1.0));
        let v = self_consistency(&["A", "A", "B"]).unwrap();
        assert_eq!((v.winner.as_str(), v.count, v.total), ("A", 2, 3));
        let v = self_consistency(&["A", "B", "A", "B", "C"]).unwrap();
        assert_eq!((v.winner.as_str(), v.count), ("A", 2));
        assert!(self_consistency::<&str>(&[]).is_none());
    }

    #[test]
    fn threshold_is_two_thirds() {
        assert!(!needs_escalation(2, 3));
        assert!(needs_escalation(1, 3));
        assert!(needs_escalation(3, 5));
        assert!(!needs_escalation(4, 5));
    }

    fn scripted(replies: &[&str]) -> MockBackend {
        MockBackend::new(
            replies
                .iter()
                .enumerate()
                .map(|(i, r)| ScriptEntry::new("q", *r).for_seed(i as u64))
                .collect(),
        )
    }

    #[test]
    fn majority_without_escalation() {
        let m = scripted(&["A", "A", "B"]);
        let out = generate_with_scaling(&m, "q", &[], Capability::TextGen, GenerationBudget::voting(3, 2), 0, EscalationPolicy::default())
            .unwrap();
        assert_eq!(out.text, "A");
        assert!(!out.contested);
        assert!(out.trace.escalations.is_empty());
    }

    #[test]
    fn three_way_split_escalates_once_to_five() {
        let m = scripted(&["A", "B", "C", "A", "A"]);
        let out = generate_with_scaling(&m, "q", &[], Capability::TextGen, GenerationBudget::voting(3, 1), 0, EscalationPolicy::default())
            .unwrap();
        assert_eq!(out.trace.samples.len(), 5);
        assert_eq!(out.trace.escalations.len(), 1);
        assert_eq!(out.text, "A");
        // 3 of 5 is still under two thirds and escalations are spent
        assert!(out.contested);
    }

    #[test]
    fn depth_extends_past_the_cap() {
        let m = scripted(&["A", "B", "C", "D", "E", "F", "G"]);
        let out = generate_with_scaling(&m, "q", &[], Capability::TextGen, GenerationBudget::voting(3, 2), 0, EscalationPolicy::default())
            .unwrap();
        let depths: Vec<Depth> = out.trace.escalations.iter().map(|e| e.depth).collect();
        assert_eq!(depths, vec![Depth::Standard, Depth::Extended]);
        assert_eq!(out.trace.samples.len(), 7);
        assert_eq!(out.trace.samples[6].depth, Depth::Extended);
    }

    #[test]
    fn backend_failure_keeps_partial_trace() {
        let m = MockBackend::default();
        let err = generate_with_scaling(&m, "q", &[], Capability::CodeRun, GenerationBudget::SINGLE, 0, EscalationPolicy::default())
            .unwrap_err();
        assert!(err.partial.samples.is_empty());
        assert_eq!(err.error, BackendError::Unsupported(Capability::CodeRun));
    }
}
