//! Identity, roles, consent, access control and the audit log.

pub mod audit;
pub mod consent;
pub mod rbac;

pub use audit::{
    AuditError, AuditEvent, AuditHeader, AuditLog, AuditSink, ChainStatus, Digest,
    DigestAlgorithm, FileSink, MemorySink,
};
pub use consent::{ConsentRecord, ConsentRegistry, ConsentScope, ConsentState};
pub use rbac::{
    authorize, Action, Actor, ActorError, Decision, Directory, ResourceClass, ResourceRef, Role,
};
