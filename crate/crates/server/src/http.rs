//! The HTTP surface. Every route authenticates a bearer token, then hands
//! the caller's actor id to the engine, which authorises and audits.
//!
//! Errors share one envelope: `{"code", "rule", "message"}`.

use std::sync::Arc;

use axum::extract::{FromRequest, FromRequestParts, Path, Request, State};
use axum::http::request::Parts;
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use mentorloop_core::context_store::{ItemEdit, ItemFilter, NewItem, ReadinessComponent};
use mentorloop_core::engine::{Engine, EngineError, ErrorClass, QueryRequest, ReturnRequest};
use mentorloop_core::governance::{ConsentScope, ConsentState};
use mentorloop_core::ids::{ActorId, CaseId, DocumentId, GoalId, ItemId, StudentId, SummaryId};
use mentorloop_core::retrieval::Document;
use mentorloop_core::supervision::{GoalChange, GoalSpec};
use mentorloop_core::time::Timestamp;
use mentorloop_core::tkg::MilestonePlan;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::auth::TokenStore;

#[derive(Clone)]
pub struct AppState {
    pub engine: Arc<Engine>,
    pub tokens: Arc<TokenStore>,
}

impl AppState {
    pub fn new(engine: Engine, tokens: TokenStore) -> Self {
        Self {
            engine: Arc::new(engine),
            tokens: Arc::new(tokens),
        }
    }

    /// Engine calls may block on per-student locks or a remote backend.
    async fn run<T, F>(&self, f: F) -> Result<T, ApiError>
    where
        T: Send + 'static,
        F: FnOnce(&Engine) -> Result<T, EngineError> + Send + 'static,
    {
        let engine = self.engine.clone();
        tokio::task::spawn_blocking(move || f(&engine))
            .await
            .map_err(|e| ApiError::internal(e.to_string()))?
            .map_err(ApiError::from)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorEnvelope {
    pub code: String,
    pub rule: Option<String>,
    pub message: String,
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    envelope: ErrorEnvelope,
}

impl ApiError {
    fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        Self {
            status,
            envelope: ErrorEnvelope {
                code: code.into(),
                rule: None,
                message: message.into(),
            },
        }
    }

    fn unauthenticated() -> Self {
        Self::new(StatusCode::UNAUTHORIZED, "unauthenticated", "missing or unknown bearer token")
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "invalid", message)
    }

    fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }
}

impl From<EngineError> for ApiError {
    fn from(e: EngineError) -> Self {
        let status = match e.class() {
            ErrorClass::Unauthenticated => StatusCode::UNAUTHORIZED,
            ErrorClass::Forbidden => StatusCode::FORBIDDEN,
            ErrorClass::NotFound => StatusCode::NOT_FOUND,
            ErrorClass::Invalid => StatusCode::BAD_REQUEST,
            ErrorClass::Conflict => StatusCode::CONFLICT,
            ErrorClass::Internal => StatusCode::INTERNAL_SERVER_ERROR,
        };
        Self {
            status,
            envelope: ErrorEnvelope {
                code: e.code().into(),
                rule: e.rule().map(str::to_owned),
                message: e.to_string(),
            },
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.envelope)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

/// The authenticated actor.
pub struct Caller(pub ActorId);

impl FromRequestParts<AppState> for Caller {
    type Rejection = ApiError;

    async fn from_request_parts(parts: &mut Parts, state: &AppState) -> Result<Self, ApiError> {
        let header = parts.headers.get(header::AUTHORIZATION).and_then(|h| h.to_str().ok());
        state
            .tokens
            .resolve(header)
            .cloned()
            .map(Caller)
            .ok_or_else(ApiError::unauthenticated)
    }
}

/// JSON body whose parse failures use the error envelope.
pub struct Body<T>(pub T);

impl<S: Send + Sync, T: DeserializeOwned> FromRequest<S> for Body<T> {
    type Rejection = ApiError;

    async fn from_request(req: Request, state: &S) -> Result<Self, ApiError> {
        Json::<T>::from_request(req, state)
            .await
            .map(|Json(v)| Body(v))
            .map_err(|e| ApiError::bad_request(e.body_text()))
    }
}

/// Query string whose parse failures use the error envelope.
pub struct Params<T>(pub T);

impl<S: Send + Sync, T: DeserializeOwned> FromRequestParts<S> for Params<T> {
    type Rejection = ApiError;

    async fn from_request_parts(parts: &mut Parts, state: &S) -> Result<Self, ApiError> {
        axum::extract::Query::<T>::from_request_parts(parts, state)
            .await
            .map(|q| Params(q.0))
            .map_err(|e| ApiError::bad_request(e.body_text()))
    }
}

// ---- request bodies ----

#[derive(Deserialize)]
struct PutItemBody {
    #[serde(default)]
    id: Option<ItemId>,
    #[serde(flatten)]
    item: NewItem,
}

#[derive(Deserialize)]
struct ConsentBody {
    scope: ConsentScope,
    state: ConsentState,
}

#[derive(Deserialize)]
struct ReadinessBody {
    component: ReadinessComponent,
    value: f64,
}

#[derive(Deserialize)]
struct CurateBody {
    #[serde(default)]
    narrative: Option<String>,
    #[serde(default)]
    artefact_links: Option<Vec<ItemId>>,
}

#[derive(Deserialize)]
struct PracticeBody {
    prompt: String,
    #[serde(default)]
    topic: Option<String>,
}

#[derive(Deserialize)]
struct ReviewBody {
    success: bool,
}

#[derive(Deserialize, Default)]
struct CheckBody {
    #[serde(default)]
    seed_questions: Vec<String>,
}

#[derive(Deserialize)]
struct AnswersBody {
    answers: Vec<String>,
}

#[derive(Deserialize)]
struct CorpusBody {
    documents: Vec<Document>,
}

#[derive(Deserialize)]
struct TopicParams {
    #[serde(default)]
    topic: Option<String>,
}

#[derive(Deserialize)]
struct AtParams {
    #[serde(default)]
    at: Option<i64>,
}

#[derive(Deserialize)]
struct WindowParams {
    t1: i64,
    t2: i64,
}

#[derive(Deserialize)]
struct DiffParams {
    from: usize,
    to: usize,
}

#[derive(Deserialize)]
struct SearchParams {
    q: String,
    #[serde(default = "default_k")]
    k: usize,
}

fn default_k() -> usize {
    5
}

// ---- handlers ----

async fn me(State(s): State<AppState>, Caller(a): Caller) -> ApiResult<Json<Value>> {
    let actor = s.run(move |e| e.actor(&a)).await?;
    Ok(Json(json!(actor)))
}

async fn query(
    State(s): State<AppState>,
    Caller(a): Caller,
    Path(student): Path<StudentId>,
    Body(req): Body<QueryRequest>,
) -> ApiResult<Response> {
    let r = s.run(move |e| e.query(&a, &student, req)).await?;
    Ok(Json(r).into_response())
}

async fn list_items(
    State(s): State<AppState>,
    Caller(a): Caller,
    Path(student): Path<StudentId>,
    Params(filter): Params<ItemFilter>,
) -> ApiResult<Response> {
    let r = s.run(move |e| e.get_items(&a, &student, &filter)).await?;
    Ok(Json(r).into_response())
}

async fn put_item(
    State(s): State<AppState>,
    Caller(a): Caller,
    Path(student): Path<StudentId>,
    Body(body): Body<PutItemBody>,
) -> ApiResult<Response> {
    let r = s.run(move |e| e.put_item(&a, &student, body.id, body.item)).await?;
    Ok((StatusCode::CREATED, Json(r)).into_response())
}

async fn get_item(
    State(s): State<AppState>,
    Caller(a): Caller,
    Path((student, id)): Path<(StudentId, ItemId)>,
) -> ApiResult<Response> {
    let r = s.run(move |e| e.get_item(&a, &student, &id)).await?;
    Ok(Json(r).into_response())
}

async fn edit_item(
    State(s): State<AppState>,
    Caller(a): Caller,
    Path((student, id)): Path<(StudentId, ItemId)>,
    Body(edit): Body<ItemEdit>,
) -> ApiResult<Response> {
    let r = s.run(move |e| e.edit_item(&a, &student, &id, edit)).await?;
    Ok(Json(r).into_response())
}

async fn purge_item(
    State(s): State<AppState>,
    Caller(a): Caller,
    Path((student, id)): Path<(StudentId, ItemId)>,
) -> ApiResult<StatusCode> {
    s.run(move |e| e.purge_item(&a, &student, &id)).await?;
    Ok(StatusCode::NO_CONTENT)
}

async fn verify_item(
    State(s): State<AppState>,
    Caller(a): Caller,
    Path((student, id)): Path<(StudentId, ItemId)>,
) -> ApiResult<Response> {
    let r = s.run(move |e| e.verify_item(&a, &student, &id)).await?;
    Ok(Json(r).into_response())
}

async fn ingest_documents(
    State(s): State<AppState>,
    Caller(a): Caller,
    Path(student): Path<StudentId>,
    Body(body): Body<CorpusBody>,
) -> ApiResult<Response> {
    let r = s.run(move |e| e.ingest_student_documents(&a, &student, body.documents)).await?;
    Ok((StatusCode::CREATED, Json(json!({ "item_ids": r }))).into_response())
}

async fn readiness(State(s): State<AppState>, Caller(a): Caller, Path(student): Path<StudentId>) -> ApiResult<Response> {
    let r = s.run(move |e| e.readiness(&a, &student)).await?;
    Ok(Json(r).into_response())
}

async fn update_readiness(
    State(s): State<AppState>,
    Caller(a): Caller,
    Path(student): Path<StudentId>,
    Body(body): Body<ReadinessBody>,
) -> ApiResult<Response> {
    let r = s.run(move |e| e.update_readiness(&a, &student, body.component, body.value)).await?;
    Ok(Json(r).into_response())
}

async fn export(State(s): State<AppState>, Caller(a): Caller, Path(student): Path<StudentId>) -> ApiResult<Response> {
    let bytes = s.run(move |e| e.export(&a, &student)).await?;
    Ok(([(header::CONTENT_TYPE, "application/zip")], bytes).into_response())
}

async fn timeline(
    State(s): State<AppState>,
    Caller(a): Caller,
    Path(student): Path<StudentId>,
    Params(p): Params<AtParams>,
) -> ApiResult<Response> {
    let r = s
        .run(move |e| {
            let at = p.at.map(Timestamp).unwrap_or_else(|| e.now());
            e.timeline(&a, &student, at)
        })
        .await?;
    Ok(Json(r).into_response())
}

async fn timeline_diff(
    State(s): State<AppState>,
    Caller(a): Caller,
    Path(student): Path<StudentId>,
    Params(p): Params<WindowParams>,
) -> ApiResult<Response> {
    let r = s.run(move |e| e.timeline_diff(&a, &student, Timestamp(p.t1), Timestamp(p.t2))).await?;
    Ok(Json(r).into_response())
}

async fn get_consent(State(s): State<AppState>, Caller(a): Caller, Path(student): Path<StudentId>) -> ApiResult<Response> {
    let r = s.run(move |e| e.consent(&a, &student)).await?;
    Ok(Json(r).into_response())
}

async fn set_consent(
    State(s): State<AppState>,
    Caller(a): Caller,
    Path(student): Path<StudentId>,
    Body(body): Body<ConsentBody>,
) -> ApiResult<Response> {
    let r = s.run(move |e| e.set_consent(&a, &student, body.scope, body.state)).await?;
    Ok(Json(r).into_response())
}

async fn list_goals(State(s): State<AppState>, Caller(a): Caller, Path(student): Path<StudentId>) -> ApiResult<Response> {
    let r = s.run(move |e| e.goals(&a, &student)).await?;
    Ok(Json(r).into_response())
}

async fn create_goal(
    State(s): State<AppState>,
    Caller(a): Caller,
    Path(student): Path<StudentId>,
    Body(spec): Body<GoalSpec>,
) -> ApiResult<Response> {
    let r = s.run(move |e| e.create_goal(&a, &student, spec)).await?;
    Ok((StatusCode::CREATED, Json(r)).into_response())
}

async fn update_goal(
    State(s): State<AppState>,
    Caller(a): Caller,
    Path((student, goal)): Path<(StudentId, GoalId)>,
    Body(change): Body<GoalChange>,
) -> ApiResult<Response> {
    let r = s.run(move |e| e.update_goal(&a, &student, &goal, change)).await?;
    Ok(Json(r).into_response())
}

async fn list_summaries(State(s): State<AppState>, Caller(a): Caller, Path(student): Path<StudentId>) -> ApiResult<Response> {
    let r = s.run(move |e| e.summaries(&a, &student)).await?;
    Ok(Json(r).into_response())
}

async fn curate_summary(
    State(s): State<AppState>,
    Caller(a): Caller,
    Path((student, id)): Path<(StudentId, SummaryId)>,
    Body(body): Body<CurateBody>,
) -> ApiResult<Response> {
    let r = s
        .run(move |e| e.curate_summary(&a, &student, &id, body.narrative, body.artefact_links))
        .await?;
    Ok(Json(r).into_response())
}

async fn confirm_summary(
    State(s): State<AppState>,
    Caller(a): Caller,
    Path((student, id)): Path<(StudentId, SummaryId)>,
) -> ApiResult<Response> {
    let r = s.run(move |e| e.confirm_summary(&a, &student, &id)).await?;
    Ok(Json(r).into_response())
}

async fn release_summary(
    State(s): State<AppState>,
    Caller(a): Caller,
    Path((student, id)): Path<(StudentId, SummaryId)>,
) -> ApiResult<Response> {
    let r = s.run(move |e| e.release_summary(&a, &student, &id)).await?;
    Ok(Json(r).into_response())
}

async fn list_milestones(State(s): State<AppState>, Caller(a): Caller, Path(student): Path<StudentId>) -> ApiResult<Response> {
    let r = s.run(move |e| e.milestones(&a, &student)).await?;
    Ok(Json(r).into_response())
}

async fn put_milestone(
    State(s): State<AppState>,
    Caller(a): Caller,
    Path(student): Path<StudentId>,
    Body(plan): Body<MilestonePlan>,
) -> ApiResult<Response> {
    let r = s.run(move |e| e.put_milestone(&a, &student, plan)).await?;
    Ok(Json(r).into_response())
}

async fn list_practice(State(s): State<AppState>, Caller(a): Caller, Path(student): Path<StudentId>) -> ApiResult<Response> {
    let r = s.run(move |e| e.practice_items(&a, &student)).await?;
    Ok(Json(r).into_response())
}

async fn practice_due(
    State(s): State<AppState>,
    Caller(a): Caller,
    Path(student): Path<StudentId>,
    Params(p): Params<AtParams>,
) -> ApiResult<Response> {
    let r = s.run(move |e| e.practice_due(&a, &student, p.at.map(Timestamp))).await?;
    Ok(Json(r).into_response())
}

async fn create_practice(
    State(s): State<AppState>,
    Caller(a): Caller,
    Path(student): Path<StudentId>,
    Body(body): Body<PracticeBody>,
) -> ApiResult<Response> {
    let r = s.run(move |e| e.create_practice(&a, &student, body.prompt, body.topic)).await?;
    Ok((StatusCode::CREATED, Json(r)).into_response())
}

async fn review_practice(
    State(s): State<AppState>,
    Caller(a): Caller,
    Path((student, id)): Path<(StudentId, String)>,
    Body(body): Body<ReviewBody>,
) -> ApiResult<Response> {
    let r = s.run(move |e| e.review_practice(&a, &student, &id, body.success)).await?;
    Ok(Json(r).into_response())
}

async fn list_checks(State(s): State<AppState>, Caller(a): Caller, Path(student): Path<StudentId>) -> ApiResult<Response> {
    let r = s.run(move |e| e.checks(&a, &student)).await?;
    Ok(Json(r).into_response())
}

async fn submit_check(
    State(s): State<AppState>,
    Caller(a): Caller,
    Path((student, id)): Path<(StudentId, String)>,
    Body(body): Body<AnswersBody>,
) -> ApiResult<Response> {
    let r = s.run(move |e| e.submit_check(&a, &student, &id, body.answers)).await?;
    Ok((StatusCode::CREATED, Json(r)).into_response())
}

async fn list_cases(State(s): State<AppState>, Caller(a): Caller, Path(student): Path<StudentId>) -> ApiResult<Response> {
    let r = s.run(move |e| e.cases_of(&a, &student)).await?;
    Ok(Json(r).into_response())
}

async fn patches(
    State(s): State<AppState>,
    Caller(a): Caller,
    Path(student): Path<StudentId>,
    Params(p): Params<TopicParams>,
) -> ApiResult<Response> {
    let r = s.run(move |e| e.patch_digest(&a, &student, p.topic.as_deref())).await?;
    Ok(Json(r).into_response())
}

async fn share(State(s): State<AppState>, Caller(a): Caller, Path(artefact): Path<ItemId>) -> ApiResult<Response> {
    let r = s.run(move |e| e.share(&a, &artefact)).await?;
    Ok((StatusCode::CREATED, Json(r)).into_response())
}

async fn start_check(
    State(s): State<AppState>,
    Caller(a): Caller,
    Path(artefact): Path<ItemId>,
    raw: axum::body::Bytes,
) -> ApiResult<Response> {
    // The body is optional here, so an empty payload means "no seed questions".
    let body: CheckBody = if raw.is_empty() {
        CheckBody::default()
    } else {
        serde_json::from_slice(&raw).map_err(|e| ApiError::bad_request(e.to_string()))?
    };
    let r = s.run(move |e| e.start_check(&a, &artefact, body.seed_questions)).await?;
    Ok((StatusCode::CREATED, Json(r)).into_response())
}

async fn queue(State(s): State<AppState>, Caller(a): Caller, Path(sup): Path<ActorId>) -> ApiResult<Response> {
    let r = s.run(move |e| e.queue(&a, &sup)).await?;
    Ok(Json(r).into_response())
}

async fn supervisor_summaries(State(s): State<AppState>, Caller(a): Caller, Path(sup): Path<ActorId>) -> ApiResult<Response> {
    let r = s.run(move |e| e.supervisor_summaries(&a, &sup)).await?;
    Ok(Json(r).into_response())
}

async fn get_case(State(s): State<AppState>, Caller(a): Caller, Path(case): Path<CaseId>) -> ApiResult<Response> {
    let r = s.run(move |e| e.get_case(&a, &case)).await?;
    Ok(Json(r).into_response())
}

async fn review_case(State(s): State<AppState>, Caller(a): Caller, Path(case): Path<CaseId>) -> ApiResult<Response> {
    let r = s.run(move |e| e.start_review(&a, &case)).await?;
    Ok(Json(r).into_response())
}

async fn return_case(
    State(s): State<AppState>,
    Caller(a): Caller,
    Path(case): Path<CaseId>,
    Body(req): Body<ReturnRequest>,
) -> ApiResult<Response> {
    let r = s.run(move |e| e.return_case(&a, &case, req)).await?;
    Ok(Json(r).into_response())
}

async fn acknowledge_case(State(s): State<AppState>, Caller(a): Caller, Path(case): Path<CaseId>) -> ApiResult<Response> {
    let r = s.run(move |e| e.acknowledge(&a, &case)).await?;
    Ok(Json(r).into_response())
}

async fn close_case(State(s): State<AppState>, Caller(a): Caller, Path(case): Path<CaseId>) -> ApiResult<Response> {
    let r = s.run(move |e| e.close_case(&a, &case)).await?;
    Ok(Json(r).into_response())
}

async fn aggregates(State(s): State<AppState>, Caller(a): Caller) -> ApiResult<Response> {
    let r = s.run(move |e| e.aggregates(&a)).await?;
    Ok(Json(r).into_response())
}

async fn get_policy(State(s): State<AppState>, Caller(a): Caller) -> ApiResult<Response> {
    let r = s.run(move |e| e.policy(&a)).await?;
    Ok(Json(r).into_response())
}

async fn put_policy_document(State(s): State<AppState>, Caller(a): Caller, Body(doc): Body<Document>) -> ApiResult<Response> {
    let r = s.run(move |e| e.put_policy_document(&a, doc)).await?;
    Ok(Json(r).into_response())
}

async fn replace_policy(State(s): State<AppState>, Caller(a): Caller, Body(body): Body<CorpusBody>) -> ApiResult<Response> {
    let r = s.run(move |e| e.replace_policy_corpus(&a, body.documents)).await?;
    Ok(Json(json!({ "version": r })).into_response())
}

async fn remove_policy_document(
    State(s): State<AppState>,
    Caller(a): Caller,
    Path(doc): Path<DocumentId>,
) -> ApiResult<StatusCode> {
    s.run(move |e| e.remove_policy_document(&a, &doc)).await?;
    Ok(StatusCode::NO_CONTENT)
}

async fn policy_conflicts(State(s): State<AppState>, Caller(a): Caller) -> ApiResult<Response> {
    let r = s.run(move |e| e.policy_conflicts(&a)).await?;
    Ok(Json(r).into_response())
}

async fn policy_diff(State(s): State<AppState>, Caller(a): Caller, Params(p): Params<DiffParams>) -> ApiResult<Response> {
    let r = s.run(move |e| e.policy_diff(&a, p.from, p.to)).await?;
    Ok(Json(r).into_response())
}

async fn policy_search(State(s): State<AppState>, Caller(a): Caller, Params(p): Params<SearchParams>) -> ApiResult<Response> {
    let r = s.run(move |e| e.policy_query(&a, &p.q, p.k)).await?;
    Ok(Json(r).into_response())
}

async fn audit_verify(State(s): State<AppState>, Caller(a): Caller) -> ApiResult<Response> {
    let (status, events) = s.run(move |e| Ok((e.audit_verify(&a)?, e.audit_len()))).await?;
    let valid = status == mentorloop_core::governance::ChainStatus::Valid;
    Ok(Json(json!({ "status": status.to_string(), "valid": valid, "events": events })).into_response())
}

async fn audit_events(State(s): State<AppState>, Caller(a): Caller) -> ApiResult<Response> {
    let r = s.run(move |e| e.audit_events(&a)).await?;
    Ok(Json(r).into_response())
}

async fn not_found() -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, "not-found", "no such route")
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/me", get(me))
        .route("/students/{id}/query", post(query))
        .route("/students/{id}/context/items", get(list_items).post(put_item))
        .route(
            "/students/{id}/context/items/{item}",
            get(get_item).patch(edit_item).delete(purge_item),
        )
        .route("/students/{id}/context/items/{item}/verify", post(verify_item))
        .route("/students/{id}/documents", post(ingest_documents))
        .route("/students/{id}/readiness", get(readiness).post(update_readiness))
        .route("/students/{id}/export", get(export))
        .route("/students/{id}/timeline", get(timeline))
        .route("/students/{id}/timeline/diff", get(timeline_diff))
        .route("/students/{id}/consent", get(get_consent).put(set_consent))
        .route("/students/{id}/goals", get(list_goals).post(create_goal))
        .route("/students/{id}/goals/{gid}", axum::routing::patch(update_goal))
        .route("/students/{id}/summaries", get(list_summaries))
        .route("/students/{id}/summaries/{sid}", axum::routing::patch(curate_summary))
        .route("/students/{id}/summaries/{sid}/confirm", post(confirm_summary))
        .route("/students/{id}/summaries/{sid}/release", post(release_summary))
        .route("/students/{id}/milestones", get(list_milestones).post(put_milestone))
        .route("/students/{id}/practice", get(list_practice).post(create_practice))
        .route("/students/{id}/practice/due", get(practice_due))
        .route("/students/{id}/practice/{pid}/review", post(review_practice))
        .route("/students/{id}/checks", get(list_checks))
        .route("/students/{id}/checks/{cid}/submit", post(submit_check))
        .route("/students/{id}/cases", get(list_cases))
        .route("/students/{id}/patches", get(patches))
        .route("/artefacts/{id}/share", post(share))
        .route("/artefacts/{id}/checks", post(start_check))
        .route("/supervisors/{id}/queue", get(queue))
        .route("/supervisors/{id}/summaries", get(supervisor_summaries))
        .route("/cases/{id}", get(get_case))
        .route("/cases/{id}/review", post(review_case))
        .route("/cases/{id}/return", post(return_case))
        .route("/cases/{id}/acknowledge", post(acknowledge_case))
        .route("/cases/{id}/close", post(close_case))
        .route("/grs/aggregates", get(aggregates))
        .route("/grs/policy", get(get_policy).post(put_policy_document).put(replace_policy))
        .route("/grs/policy/documents/{doc}", axum::routing::delete(remove_policy_document))
        .route("/grs/policy/conflicts", get(policy_conflicts))
        .route("/grs/policy/diff", get(policy_diff))
        .route("/grs/policy/search", get(policy_search))
        .route("/audit/verify", get(audit_verify))
        .route("/audit/events", get(audit_events))
        .fallback(not_found)
        .with_state(state)
}
