//! Governed orchestration engine for AI-assisted doctoral supervision.
//!
//! The crate is organised around the subsystems of the assistant:
//!
//! - [`governance`]: actors, role-based access control, consent and the
//!   hash-chained audit log every other subsystem writes through.
//! - [`context_store`]: the private per-student store (items, rolling
//!   conversation summary, readiness vector).
//! - [`retrieval`]: BM25 passage retrieval with source backlinks over
//!   strictly separated student and policy corpora, plus policy-author tools.
//! - [`tkg`]: the temporal knowledge graph of a candidature.
//! - [`orchestrator`]: routing, capability planning, generation backends and
//!   self-consistency voting with inference-time escalation.
//! - [`patch_engine`]: supervisor behaviour patches and the learning guards
//!   (questioning mode, retrieval practice, low-support checks).
//! - [`supervision`]: the moderation loop, goals and thresholds,
//!   consent-gated progress summaries and aggregate signals.
//! - [`triage`]: severity / mitigability / risk triage of supervision issues.
//! - [`engine`]: the façade binding everything together behind one
//!   authorised, audited API.

pub mod canonical;
pub mod context_store;
pub mod engine;
pub mod governance;
pub mod ids;
pub mod orchestrator;
pub mod patch_engine;
pub mod retrieval;
pub mod supervision;
pub mod time;
pub mod tkg;
pub mod transcript;
pub mod triage;

pub use engine::{Engine, EngineConfig, EngineError};
pub use ids::{ActorId, ItemId};
pub use time::{Clock, ManualClock, SystemClock, Timestamp};
