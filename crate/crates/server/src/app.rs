//! Builds a running engine from a [`ServiceConfig`].

use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use mentorloop_core::governance::{Actor, AuditLog, Directory, Role};
use mentorloop_core::orchestrator::{GenerationBackend, MockBackend, ScriptEntry};
use mentorloop_core::retrieval::{load_corpus_dir, CorpusClass};
use mentorloop_core::time::SystemClock;
use mentorloop_core::Engine;

use crate::auth::TokenStore;
use crate::backend::HttpBackend;
use crate::config::{BackendConfig, ServiceConfig};
use crate::http::AppState;

pub fn load_script(path: &Path) -> Result<Vec<ScriptEntry>, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
}

pub fn build_backend(cfg: &BackendConfig) -> Result<Arc<dyn GenerationBackend>, String> {
    Ok(match cfg {
        BackendConfig::Mock { script, capabilities } => {
            let entries = match script {
                Some(p) => load_script(p)?,
                None => Vec::new(),
            };
            let mut mock = MockBackend::new(entries);
            for c in capabilities {
                mock = mock.with_capability(*c);
            }
            Arc::new(mock)
        }
        BackendConfig::Http {
            endpoint,
            capabilities,
            timeout_secs,
        } => Arc::new(HttpBackend::new(
            endpoint.clone(),
            capabilities.clone(),
            Duration::from_secs(*timeout_secs),
        )),
    })
}

/// Engine plus its initial corpora. Corpus loading at startup runs as the
/// System actor and is audited like any other change.
pub fn build_engine(cfg: &ServiceConfig) -> Result<Engine, String> {
    let mut dir = Directory::new();
    for a in cfg.actors.iter().filter(|a| a.role != Role::System) {
        dir.register(a.clone()).map_err(|e| e.to_string())?;
    }
    let audit = match &cfg.audit_log {
        Some(p) => AuditLog::open_file(p, cfg.digest_algorithm).map_err(|e| format!("{}: {e}", p.display()))?,
        None => AuditLog::in_memory(cfg.digest_algorithm),
    };
    let engine = Engine::new(
        cfg.engine.clone(),
        dir,
        build_backend(&cfg.backend)?,
        Arc::new(SystemClock),
        audit,
    )
    .map_err(|e| e.to_string())?;
    let system = Actor::system().id;
    if let Some(p) = &cfg.corpora.policy {
        let corpus = load_corpus_dir(p, &CorpusClass::PolicyIndex).map_err(|e| e.to_string())?;
        engine
            .replace_policy_corpus(&system, corpus.documents)
            .map_err(|e| e.to_string())?;
    }
    for (student, p) in &cfg.corpora.students {
        let corpus =
            load_corpus_dir(p, &CorpusClass::StudentCorpus(student.clone())).map_err(|e| e.to_string())?;
        engine
            .ingest_student_documents(&system, student, corpus.documents)
            .map_err(|e| e.to_string())?;
    }
    Ok(engine)
}

pub fn build_state(cfg: &ServiceConfig) -> Result<AppState, String> {
    let tokens = TokenStore::load(&cfg.token_file)?;
    Ok(AppState::new(build_engine(cfg)?, tokens))
}
