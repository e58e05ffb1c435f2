//! Service configuration: one TOML file.
//!
//! ```toml
//! bind = "127.0.0.1:8080"
//! token_file = "tokens.txt"
//! audit_log = "audit.log"          # omit for an in-memory log
//! digest_algorithm = "sha256"
//!
//! [engine]
//! k_min = 5
//! practice_base_interval = 86400000
//!
//! [backend]
//! kind = "mock"                    # or "http"
//! script = "script.json"
//!
//! [corpora]
//! policy = "corpus/policy"
//! students = { alice = "corpus/alice" }
//!
//! [[actors]]
//! id = "alice"
//! role = "Student"
//! ```
//!
//! Relative paths resolve against the config file's directory.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use mentorloop_core::engine::EngineConfig;
use mentorloop_core::governance::{Actor, DigestAlgorithm};
use mentorloop_core::ids::StudentId;
use mentorloop_core::orchestrator::Capability;
use serde::Deserialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Parse { path: PathBuf, source: toml::de::Error },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServiceConfig {
    #[serde(default = "default_bind")]
    pub bind: String,
    pub token_file: PathBuf,
    #[serde(default)]
    pub audit_log: Option<PathBuf>,
    #[serde(default)]
    pub digest_algorithm: DigestAlgorithm,
    #[serde(default)]
    pub engine: EngineConfig,
    #[serde(default)]
    pub backend: BackendConfig,
    #[serde(default)]
    pub corpora: CorporaConfig,
    #[serde(default)]
    pub actors: Vec<Actor>,
    /// Interval of the curation auto-confirm sweep, in seconds.
    #[serde(default = "default_sweep")]
    pub sweep_interval_secs: u64,
}

fn default_bind() -> String {
    "127.0.0.1:8080".into()
}

fn default_sweep() -> u64 {
    60
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum BackendConfig {
    /// In-process scripted backend; unmatched prompts get deterministic
    /// fallback text.
    Mock {
        #[serde(default)]
        script: Option<PathBuf>,
        #[serde(default)]
        capabilities: BTreeSet<Capability>,
    },
    Http {
        endpoint: String,
        #[serde(default)]
        capabilities: BTreeSet<Capability>,
        #[serde(default = "default_timeout")]
        timeout_secs: u64,
    },
}

impl Default for BackendConfig {
    fn default() -> Self {
        Self::Mock {
            script: None,
            capabilities: BTreeSet::new(),
        }
    }
}

fn default_timeout() -> u64 {
    60
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorporaConfig {
    #[serde(default)]
    pub policy: Option<PathBuf>,
    #[serde(default)]
    pub students: BTreeMap<StudentId, PathBuf>,
}

impl ServiceConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_owned(),
            source,
        })?;
        let mut cfg = Self::parse(&text).map_err(|source| ConfigError::Parse {
            path: path.to_owned(),
            source,
        })?;
        cfg.resolve(path.parent().unwrap_or(Path::new(".")));
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    fn resolve(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.token_file);
        if let Some(p) = &mut self.audit_log {
            fix(p);
        }
        if let BackendConfig::Mock { script: Some(p), .. } = &mut self.backend {
            fix(p);
        }
        if let Some(p) = &mut self.corpora.policy {
            fix(p);
        }
        for p in self.corpora.students.values_mut() {
            fix(p);
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.engine.k_min == 0 {
            return Err(ConfigError::Invalid("engine.k_min must be at least 1".into()));
        }
        if self.engine.practice_base_interval <= 0 {
            return Err(ConfigError::Invalid("engine.practice_base_interval must be positive".into()));
        }
        for student in self.corpora.students.keys() {
            if !self.actors.iter().any(|a| &a.id == student) {
                return Err(ConfigError::Invalid(format!("corpus configured for unknown student `{student}`")));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_defaults() {
        let c = ServiceConfig::parse("token_file = \"t.txt\"").unwrap();
        assert_eq!(c.bind, "127.0.0.1:8080");
        assert!(matches!(c.backend, BackendConfig::Mock { script: None, .. }));
        assert_eq!(c.engine.k_min, 5);
        c.validate().unwrap();
    }

    #[test]
    fn full_config_parses() {
        let c = ServiceConfig::parse(
            r#"
token_file = "t.txt"
digest_algorithm = "sha512"
[engine]
k_min = 3
[backend]
kind = "http"
endpoint = "http://localhost:9000"
capabilities = ["WellbeingScreen"]
[corpora]
policy = "p"
students = { alice = "a" }
[[actors]]
id = "alice"
role = "Student"
[[actors]]
id = "sup"
role = "Supervisor"
supervisees = ["alice"]
"#,
        )
        .unwrap();
        assert_eq!(c.engine.k_min, 3);
        assert_eq!(c.actors.len(), 2);
        assert!(matches!(c.backend, BackendConfig::Http { .. }));
        c.validate().unwrap();
    }

    #[test]
    fn bad_values_rejected() {
        let c = ServiceConfig::parse("token_file = \"t\"\n[engine]\nk_min = 0").unwrap();
        assert!(c.validate().is_err());
        let c = ServiceConfig::parse("token_file = \"t\"\n[corpora]\nstudents = { ghost = \"g\" }").unwrap();
        assert!(c.validate().is_err());
        assert!(ServiceConfig::parse("token_file = \"t\"\nbogus = 1").is_err());
    }
}
