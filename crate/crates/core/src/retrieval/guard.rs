//! Hardening hook against indirect prompt injection in retrieved text.

use std::fmt;

/// Inspects a passage before it may be used for grounding. Returns the reason
/// when the passage should be quarantined.
pub trait InjectionGuard: Send + Sync + fmt::Debug {
    fn inspect(&self, text: &str) -> Option<String>;
}

/// Phrase-list detector. Crude, but deterministic and easy to audit.
#[derive(Debug, Default, Clone, Copy)]
pub struct LexicalInjectionGuard;

const PATTERNS: &[&str] = &[
    "ignore all previous instructions",
    "ignore previous instructions",
    "ignore the above",
    "disregard previous instructions",
    "disregard all prior",
    "system prompt",
    "you are now",
    "new instructions:",
    "begin system",
];

impl InjectionGuard for LexicalInjectionGuard {
    fn inspect(&self, text: &str) -> Option<String> {
        let lower = text.to_lowercase();
        PATTERNS
            .iter()
            .find(|p| lower.contains(*p))
            .map(|p| format!("injection pattern `{p}`"))
    }
}

/// Guard that accepts everything.
#[derive(Debug, Default, Clone, Copy)]
pub struct NoGuard;

impl InjectionGuard for NoGuard {
    fn inspect(&self, _text: &str) -> Option<String> {
        None
    }
}
