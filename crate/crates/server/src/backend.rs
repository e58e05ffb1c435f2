//! Generation over HTTP: a client backend that calls `POST /generate`, and
//! the matching route that serves any in-process backend.

use std::collections::BTreeSet;
use std::sync::Arc;
use std::time::Duration;

use axum::extract::State;
use axum::http::StatusCode;
use axum::routing::post;
use axum::{Json, Router};
use mentorloop_core::orchestrator::{BackendError, Capability, GenerateRequest, GenerateResponse, GenerationBackend};

/// Calls a remote model service. Text generation is always assumed;
/// anything else must be listed in `capabilities`.
#[derive(Debug)]
pub struct HttpBackend {
    endpoint: String,
    capabilities: BTreeSet<Capability>,
    agent: ureq::Agent,
}

impl HttpBackend {
    pub fn new(endpoint: impl Into<String>, mut capabilities: BTreeSet<Capability>, timeout: Duration) -> Self {
        capabilities.insert(Capability::TextGen);
        let config = ureq::Agent::config_builder().timeout_global(Some(timeout)).build();
        Self {
            endpoint: endpoint.into().trim_end_matches('/').to_owned(),
            capabilities,
            agent: config.into(),
        }
    }
}

impl GenerationBackend for HttpBackend {
    fn name(&self) -> &str {
        "http"
    }

    fn capabilities(&self) -> BTreeSet<Capability> {
        self.capabilities.clone()
    }

    fn generate(&self, request: &GenerateRequest) -> Result<GenerateResponse, BackendError> {
        if !self.capabilities.contains(&request.capability) {
            return Err(BackendError::Unsupported(request.capability));
        }
        let url = format!("{}/generate", self.endpoint);
        let mut resp = self
            .agent
            .post(&url)
            .send_json(request)
            .map_err(|e| BackendError::Failed(e.to_string()))?;
        resp.body_mut()
            .read_json::<GenerateResponse>()
            .map_err(|e| BackendError::Failed(format!("bad response body: {e}")))
    }
}

async fn generate(
    State(backend): State<Arc<dyn GenerationBackend>>,
    Json(req): Json<GenerateRequest>,
) -> Result<Json<GenerateResponse>, (StatusCode, String)> {
    let result = tokio::task::spawn_blocking(move || backend.generate(&req))
        .await
        .map_err(|e| (StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?;
    match result {
        Ok(r) => Ok(Json(r)),
        Err(e @ BackendError::Unsupported(_)) => Err((StatusCode::UNPROCESSABLE_ENTITY, e.to_string())),
        Err(e) => Err((StatusCode::BAD_GATEWAY, e.to_string())),
    }
}

/// `POST /generate` backed by `backend`.
pub fn generate_router(backend: Arc<dyn GenerationBackend>) -> Router {
    Router::new().route("/generate", post(generate)).with_state(backend)
}
