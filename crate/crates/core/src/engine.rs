//! The façade: one authorised, audited entry point per operation.
//!
//! Every call names its actor. Authorisation runs first; a mutation is then
//! staged on a copy of the student's state and committed only once its single
//! audit event is durably appended. Audit payloads carry ids and digests,
//! never item bodies, so purging an item leaves nothing recoverable behind.
//!
//! Lock order: student state, then consent, then audit.

use std::collections::{BTreeMap, HashMap};
use std::io::Cursor;
use std::sync::atomic::{AtomicI64, Ordering};
use std::sync::{Arc, Mutex, MutexGuard, RwLock, RwLockReadGuard, RwLockWriteGuard};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest as _, Sha256};
use thiserror::Error;

use crate::context_store::{
    ClaimTally, ContextError, ContextItem, ItemBody, ItemEdit, ItemFilter, ItemKind, NewItem, ReadinessComponent,
    ReadinessState, Speaker, StudentStore, Turn, DEFAULT_SUMMARY_BUDGET,
};
use crate::governance::{
    authorize, Action, Actor, ActorError, AuditError, AuditEvent, AuditLog, ChainStatus, ConsentRecord,
    ConsentRegistry, ConsentScope, ConsentState, Decision, Directory, ResourceClass, ResourceRef, Role,
};
use crate::ids::{ActorId, CaseId, DocumentId, GoalId, IdGen, ItemId, PatchId, StudentId, SummaryId};
use crate::orchestrator::{
    AssistantResponse, BudgetPolicy, Capability, CapabilityPlan, EscalationPolicy, GenerationBackend, GenerationMode,
    Orchestrator, OrchestratorError, PlanError, Planner, QueryInput, RetrievalSources, RouteClassifier, RouteContext, RouteKind,
    SignpostResource,
};
use crate::patch_engine::{
    due_list, low_support_check, render_digest, BehaviourPatch, CheckSession, CompiledDirectives, PatchDraft,
    PatchError, PatchRegistry, PatchScope, PolicyUpdate, PracticeItem, PracticeScheduler,
};
use crate::retrieval::{
    index_corpus, policy_diff, ClauseChange, ConflictReport, Corpus, CorpusClass, Document, Hit, IndexHandle,
    PolicyIndexHandle, RetrievalError,
};
use crate::supervision::{
    emit_aggregates, evaluate_goal, AggregateSignal, CaseState, CohortMember, EvaluatorRegistry, GoalChange,
    GoalMetric, GoalSpec, ModerationCase, ProgressSummary, ReleaseRule, ReleasedSummary, SummaryState,
    SupervisionError, TaskGoal, DEFAULT_K_MIN,
};
use crate::time::{Clock, Timestamp, DAY};
use crate::tkg::{forecast, Forecast, MilestonePlan, TemporalGraph, TkgError};

/// Tags the engine attaches to items it creates.
pub const TAG_MODERATED: &str = "moderated";
pub const TAG_LOW_SUPPORT_CHECK: &str = "low-support-check";
pub const DEFAULT_COHORT: &str = "default";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EngineConfig {
    pub summary_budget: usize,
    pub k_min: usize,
    /// Base spacing of retrieval practice, in milliseconds.
    pub practice_base_interval: i64,
    pub top_k: usize,
    pub budgets: BudgetPolicy,
    pub escalation: EscalationPolicy,
    pub signposts: Vec<SignpostResource>,
    /// Curation auto-confirms after this many milliseconds; `None` means the
    /// student must always confirm explicitly.
    pub auto_confirm_after: Option<i64>,
    /// Base of per-turn generation seeds.
    pub seed: u64,
}

impl Default for EngineConfig {
    fn default() -> Self {
        let planner = Planner::default();
        Self {
            summary_budget: DEFAULT_SUMMARY_BUDGET,
            k_min: DEFAULT_K_MIN,
            practice_base_interval: DAY,
            top_k: planner.top_k,
            budgets: BudgetPolicy::default(),
            escalation: EscalationPolicy::default(),
            signposts: planner.signposts,
            auto_confirm_after: None,
            seed: 0,
        }
    }
}

/// Coarse error class, mapped onto HTTP statuses by the service.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ErrorClass {
    Unauthenticated,
    Forbidden,
    NotFound,
    Invalid,
    Conflict,
    Internal,
}

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("denied by rule `{rule}`")]
    Denied { rule: String },
    #[error(transparent)]
    Actor(#[from] ActorError),
    #[error("{0} not found")]
    NotFound(String),
    #[error("{0}")]
    Invalid(String),
    #[error("{0}")]
    Conflict(String),
    #[error(transparent)]
    Context(#[from] ContextError),
    #[error(transparent)]
    Supervision(#[from] SupervisionError),
    #[error(transparent)]
    Patch(#[from] PatchError),
    #[error(transparent)]
    Orchestrator(#[from] OrchestratorError),
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error(transparent)]
    Tkg(#[from] TkgError),
    #[error(transparent)]
    Audit(#[from] AuditError),
}

impl EngineError {
    fn denied(rule: &str) -> Self {
        Self::Denied { rule: rule.to_owned() }
    }

    /// Rule name for denials, including consent-gated refusals.
    pub fn rule(&self) -> Option<&str> {
        match self {
            Self::Denied { rule } => Some(rule),
            Self::Supervision(SupervisionError::ConsentOff) => Some("consent-required"),
            _ => None,
        }
    }

    pub fn class(&self) -> ErrorClass {
        use ErrorClass as C;
        match self {
            Self::Denied { .. } => C::Forbidden,
            Self::Actor(ActorError::UnknownActor(_)) => C::Unauthenticated,
            Self::Actor(_) => C::Conflict,
            Self::NotFound(_) => C::NotFound,
            Self::Invalid(_) => C::Invalid,
            Self::Conflict(_) => C::Conflict,
            Self::Context(e) => match e {
                ContextError::NotFound(_) => C::NotFound,
                ContextError::DuplicateItem(_) => C::Conflict,
                ContextError::OutOfRange { .. } | ContextError::TurnsOutOfOrder { .. } => C::Invalid,
                ContextError::Tkg(_) => C::Invalid,
                ContextError::Export(_) => C::Internal,
            },
            Self::Supervision(e) => match e {
                SupervisionError::ConsentOff => C::Forbidden,
                SupervisionError::IllegalTransition { .. }
                | SupervisionError::TimeWentBackwards { .. }
                | SupervisionError::CaseOpen(_)
                | SupervisionError::SummaryState { .. }
                | SupervisionError::NoSupervisor
                | SupervisionError::NoRecipients => C::Conflict,
                _ => C::Invalid,
            },
            Self::Patch(e) => match e {
                PatchError::NotFound(_) | PatchError::UnknownPracticeItem(_) => C::NotFound,
                PatchError::DuplicatePatch(_) | PatchError::AlreadySuperseded { .. } | PatchError::SessionClosed => {
                    C::Conflict
                }
                _ => C::Invalid,
            },
            Self::Orchestrator(e) => match e {
                OrchestratorError::EmptyQuery | OrchestratorError::Plan(_) => C::Invalid,
                OrchestratorError::MissingCapability(_) => C::Conflict,
                OrchestratorError::Backend { .. } => C::Internal,
            },
            Self::Plan(PlanError::Contradiction { .. }) => C::Conflict,
            Self::Plan(_) => C::Invalid,
            Self::Retrieval(_) => C::Invalid,
            Self::Tkg(_) => C::Invalid,
            Self::Audit(_) => C::Internal,
        }
    }

    /// Stable kebab-case code for the error envelope.
    pub fn code(&self) -> &'static str {
        match self.class() {
            ErrorClass::Unauthenticated => "unauthenticated",
            ErrorClass::Forbidden => "forbidden",
            ErrorClass::NotFound => "not-found",
            ErrorClass::Invalid => "invalid",
            ErrorClass::Conflict => "conflict",
            ErrorClass::Internal => "internal",
        }
    }
}

pub type EngineResult<T> = Result<T, EngineError>;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct QueryRequest {
    pub text: String,
    /// Topic key for topic-scoped patches; inferred from the query if absent.
    #[serde(default)]
    pub topic: Option<String>,
    #[serde(default)]
    pub attachment: Option<Capability>,
    #[serde(default)]
    pub seed: Option<u64>,
}

impl QueryRequest {
    pub fn text(text: impl Into<String>) -> Self {
        Self {
            text: text.into(),
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryReply {
    /// The stored artefact holding this response.
    pub artefact_id: ItemId,
    pub topic: Option<String>,
    #[serde(flatten)]
    pub response: AssistantResponse,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReturnRequest {
    pub feedback: String,
    #[serde(default)]
    pub patch: Option<PatchDraft>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReturnOutcome {
    pub case: ModerationCase,
    pub update: PolicyUpdate,
    pub patch: Option<BehaviourPatch>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseView {
    pub case: ModerationCase,
    pub artefact: Option<ContextItem>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatchDigest {
    pub text: String,
    pub patches: Vec<BehaviourPatch>,
    pub compiled: CompiledDirectives,
    pub updates: Vec<PolicyUpdate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoalStatus {
    pub goal: TaskGoal,
    pub completion: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MilestoneStatus {
    pub plan: MilestonePlan,
    pub forecast: Forecast,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyVersion {
    pub version: usize,
    pub documents: Vec<Document>,
}

#[derive(Debug, Clone)]
struct PendingQuery {
    query: String,
    topic: Option<String>,
    plan: CapabilityPlan,
}

#[derive(Debug, Clone)]
struct StudentState {
    store: StudentStore,
    patches: PatchRegistry,
    updates: Vec<PolicyUpdate>,
    cases: BTreeMap<CaseId, ModerationCase>,
    goals: BTreeMap<GoalId, TaskGoal>,
    summaries: BTreeMap<SummaryId, ProgressSummary>,
    practice: BTreeMap<String, PracticeItem>,
    checks: BTreeMap<String, CheckSession>,
    milestones: BTreeMap<String, MilestonePlan>,
    pending: Option<PendingQuery>,
    index: Option<IndexHandle>,
}

impl StudentState {
    fn new(student: StudentId, budget: usize) -> Self {
        Self {
            store: StudentStore::new(student, budget),
            patches: PatchRegistry::default(),
            updates: Vec::new(),
            cases: BTreeMap::new(),
            goals: BTreeMap::new(),
            summaries: BTreeMap::new(),
            practice: BTreeMap::new(),
            checks: BTreeMap::new(),
            milestones: BTreeMap::new(),
            pending: None,
            index: None,
        }
    }

    fn index(&mut self) -> EngineResult<IndexHandle> {
        if let Some(i) = &self.index {
            return Ok(i.clone());
        }
        let idx = index_corpus(self.store.corpus())?;
        self.index = Some(idx.clone());
        Ok(idx)
    }

    fn open_case_for(&self, artefact: &ItemId) -> Option<&ModerationCase> {
        self.cases.values().find(|c| &c.artefact_id == artefact && c.state.is_open())
    }
}

struct PolicyState {
    handle: Arc<PolicyIndexHandle>,
    versions: Vec<Corpus>,
}

impl PolicyState {
    fn current(&self) -> &Corpus {
        self.handle.index().corpus()
    }
}

struct Entry {
    action: &'static str,
    resource: ResourceRef,
    payload: Value,
}

impl Entry {
    fn new(action: &'static str, resource: ResourceRef, payload: Value) -> Self {
        Self {
            action,
            resource,
            payload,
        }
    }
}

fn digest(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|e| e.into_inner())
}

fn read<T>(m: &RwLock<T>) -> RwLockReadGuard<'_, T> {
    m.read().unwrap_or_else(|e| e.into_inner())
}

fn write<T>(m: &RwLock<T>) -> RwLockWriteGuard<'_, T> {
    m.write().unwrap_or_else(|e| e.into_inner())
}

/// Retracts the live `(subject, relation)` fact, if any, and asserts a new one.
fn set_state_fact(
    graph: &mut TemporalGraph,
    subject: &str,
    relation: &str,
    object: &str,
    now: Timestamp,
) -> Result<(), TkgError> {
    if let Some(prev) = graph.current(subject, relation, now).map(|f| f.id.clone()) {
        graph.retract_fact(&prev, now, now)?;
    }
    graph.assert_fact(subject, relation, object, now, now)?;
    Ok(())
}

/// Longest topic key of a topic-scoped patch that the query mentions.
fn infer_topic(patches: &PatchRegistry, query: &str) -> Option<String> {
    let q = query.to_lowercase();
    patches
        .patches()
        .iter()
        .filter_map(|p| match &p.scope {
            PatchScope::Topic(t) if q.contains(&t.to_lowercase()) => Some(t.clone()),
            _ => None,
        })
        .max_by(|a, b| a.len().cmp(&b.len()).then_with(|| b.cmp(a)))
}

/// Items a goal's completion was computed from; these become the summary links.
fn evidence_links(goal: &TaskGoal, items: &[&ContextItem]) -> Vec<ItemId> {
    use crate::supervision::goals::{SECTION_TAG_PREFIX, TAG_EXPERIMENT_ANALYSED, TAG_LITERATURE_REVIEWED};
    items
        .iter()
        .filter(|i| match &goal.metric {
            GoalMetric::DraftCompleteness { planned_sections } => i.tags.iter().any(|t| {
                t.strip_prefix(SECTION_TAG_PREFIX)
                    .is_some_and(|s| planned_sections.iter().any(|p| p == s))
            }),
            GoalMetric::LiteratureReviewedCount => i.tags.contains(TAG_LITERATURE_REVIEWED),
            GoalMetric::ExperimentsAnalysedCount => i.tags.contains(TAG_EXPERIMENT_ANALYSED),
            GoalMetric::Custom { .. } => i.kind == ItemKind::Artefact,
        })
        .map(|i| i.id.clone())
        .collect()
}

pub struct Engine {
    config: EngineConfig,
    directory: RwLock<Directory>,
    consent: RwLock<ConsentRegistry>,
    audit: Mutex<AuditLog>,
    students: RwLock<BTreeMap<StudentId, Arc<Mutex<StudentState>>>>,
    case_index: RwLock<HashMap<CaseId, StudentId>>,
    item_owner: RwLock<HashMap<ItemId, StudentId>>,
    policy: RwLock<PolicyState>,
    orchestrator: Orchestrator,
    evaluators: EvaluatorRegistry,
    scheduler: PracticeScheduler,
    clock: Arc<dyn Clock>,
    /// Last mutation timestamp; mutations never share an instant.
    last_write: AtomicI64,
    ids: IdGen,
}

impl std::fmt::Debug for Engine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Engine").field("config", &self.config).finish_non_exhaustive()
    }
}

impl Engine {
    pub fn new(
        config: EngineConfig,
        directory: Directory,
        backend: Arc<dyn GenerationBackend>,
        clock: Arc<dyn Clock>,
        audit: AuditLog,
    ) -> EngineResult<Self> {
        let mut orchestrator = Orchestrator::new(backend);
        orchestrator.classifier = RouteClassifier::new(crate::orchestrator::route::BloomLexicon::shipped(), config.budgets);
        orchestrator.planner = Planner {
            top_k: config.top_k,
            signposts: config.signposts.clone(),
        };
        orchestrator.escalation = config.escalation;
        let scheduler = PracticeScheduler::new(config.practice_base_interval)?;
        let students = directory
            .students()
            .map(|a| {
                let st = StudentState::new(a.id.clone(), config.summary_budget);
                (a.id.clone(), Arc::new(Mutex::new(st)))
            })
            .collect();
        let empty = PolicyIndexHandle::empty();
        Ok(Self {
            policy: RwLock::new(PolicyState {
                versions: vec![empty.index().corpus().clone()],
                handle: Arc::new(empty),
            }),
            config,
            directory: RwLock::new(directory),
            consent: RwLock::new(ConsentRegistry::default()),
            audit: Mutex::new(audit),
            students: RwLock::new(students),
            case_index: RwLock::new(HashMap::new()),
            item_owner: RwLock::new(HashMap::new()),
            orchestrator,
            evaluators: EvaluatorRegistry::with_builtins(),
            scheduler,
            clock,
            last_write: AtomicI64::new(i64::MIN),
            ids: IdGen::default(),
        })
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    /// Clock time, never earlier than the last mutation.
    pub fn now(&self) -> Timestamp {
        Timestamp(self.clock.now().0.max(self.last_write.load(Ordering::SeqCst)))
    }

    /// A timestamp for a mutation, strictly after every earlier one so that
    /// state changes within one clock tick still order on the timeline.
    fn write_time(&self) -> Timestamp {
        let clock = self.clock.now().0;
        let prev = self
            .last_write
            .fetch_update(Ordering::SeqCst, Ordering::SeqCst, |last| Some(clock.max(last.saturating_add(1))))
            .expect("closure always returns Some");
        Timestamp(clock.max(prev.saturating_add(1)))
    }

    pub fn evaluators_mut(&mut self) -> &mut EvaluatorRegistry {
        &mut self.evaluators
    }

    pub fn actor(&self, id: &ActorId) -> EngineResult<Actor> {
        Ok(read(&self.directory).get(id)?.clone())
    }

    pub fn actors(&self) -> Vec<Actor> {
        read(&self.directory).actors().cloned().collect()
    }

    // ---- plumbing ----

    fn authorize(&self, actor: &ActorId, action: Action, resource: &ResourceRef) -> EngineResult<Actor> {
        let actor = self.actor(actor)?;
        match authorize(&actor, action, resource) {
            Decision::Allow => Ok(actor),
            Decision::Deny(rule) => Err(EngineError::Denied { rule }),
        }
    }

    fn cell(&self, student: &StudentId) -> EngineResult<Arc<Mutex<StudentState>>> {
        read(&self.students)
            .get(student)
            .cloned()
            .ok_or_else(|| EngineError::NotFound(format!("student `{student}`")))
    }

    fn append(&self, actor: &ActorId, entry: Entry, now: Timestamp) -> EngineResult<AuditEvent> {
        Ok(lock(&self.audit).append(actor, entry.action, &entry.resource.to_string(), entry.payload, now)?)
    }

    fn read_student<T>(&self, student: &StudentId, f: impl FnOnce(&StudentState) -> EngineResult<T>) -> EngineResult<T> {
        let cell = self.cell(student)?;
        let guard = lock(&cell);
        f(&guard)
    }

    /// Stages `f` on a copy; commits only after the audit append succeeds.
    fn mutate_student<T>(
        &self,
        actor: &ActorId,
        student: &StudentId,
        f: impl FnOnce(&mut StudentState, Timestamp) -> EngineResult<(T, Entry)>,
    ) -> EngineResult<T> {
        let cell = self.cell(student)?;
        let mut guard = lock(&cell);
        let now = self.write_time();
        let mut draft = guard.clone();
        let (out, entry) = f(&mut draft, now)?;
        self.append(actor, entry, now)?;
        *guard = draft;
        Ok(out)
    }

    fn owner_of_item(&self, item: &ItemId) -> EngineResult<StudentId> {
        read(&self.item_owner)
            .get(item)
            .cloned()
            .ok_or_else(|| EngineError::NotFound(format!("item `{item}`")))
    }

    fn owner_of_case(&self, case: &CaseId) -> EngineResult<StudentId> {
        read(&self.case_index)
            .get(case)
            .cloned()
            .ok_or_else(|| EngineError::NotFound(format!("case `{case}`")))
    }

    fn claim_item_id(&self, student: &StudentId, requested: Option<ItemId>, prefix: &str) -> EngineResult<ItemId> {
        let owners = read(&self.item_owner);
        match requested {
            Some(id) => match owners.get(&id) {
                Some(o) if o != student => Err(EngineError::Conflict(format!("item id `{id}` is taken"))),
                _ => Ok(id),
            },
            None => loop {
                let id = ItemId::new(self.ids.next(prefix));
                if !owners.contains_key(&id) {
                    break Ok(id);
                }
            },
        }
    }

    fn register_items(&self, student: &StudentId, ids: impl IntoIterator<Item = ItemId>) {
        let mut owners = write(&self.item_owner);
        for id in ids {
            owners.insert(id, student.clone());
        }
    }

    fn supervisors_of(&self, student: &StudentId) -> Vec<ActorId> {
        read(&self.directory).supervisors_of(student)
    }

    /// Re-evaluates every goal after an evidence change and prepares a
    /// summary for each upward threshold crossing.
    fn reevaluate_goals(&self, st: &mut StudentState, now: Timestamp) -> EngineResult<Vec<SummaryId>> {
        self.reevaluate_goals_after_edit(st, None, now)
    }

    /// As [`Self::reevaluate_goals`]; `edited` carries a goal's threshold from
    /// before an edit, so lowering a threshold under current progress counts
    /// as a crossing.
    fn reevaluate_goals_after_edit(
        &self,
        st: &mut StudentState,
        edited: Option<(&GoalId, f64)>,
        now: Timestamp,
    ) -> EngineResult<Vec<SummaryId>> {
        let mut prepared = Vec::new();
        let goal_ids: Vec<GoalId> = st.goals.keys().cloned().collect();
        for gid in goal_ids {
            let goal = st.goals[&gid].clone();
            let items = st.store.get_items(&ItemFilter::default());
            let completion = evaluate_goal(&goal, &items, &self.evaluators)?;
            let was_below = match edited {
                Some((id, old_threshold)) if *id == gid => goal.last_completion < old_threshold,
                _ => goal.last_completion < goal.threshold,
            };
            if was_below && completion >= goal.threshold {
                let links = evidence_links(&goal, &items);
                let id = SummaryId::new(self.ids.next("sum"));
                let summary = ProgressSummary::prepare(id.clone(), &goal, completion, links, now);
                st.summaries.insert(id.clone(), summary);
                prepared.push(id);
            }
            st.goals.get_mut(&gid).expect("present").last_completion = completion;
        }
        Ok(prepared)
    }

    // ---- actors and consent ----

    /// Adds an actor at runtime; only the System actor may do this.
    pub fn register_actor(&self, by: &ActorId, actor: Actor) -> EngineResult<()> {
        let caller = self.actor(by)?;
        if caller.role != Role::System {
            return Err(EngineError::denied("actor-registration-system-only"));
        }
        let now = self.write_time();
        let mut dir = write(&self.directory);
        let mut next = dir.clone();
        next.register(actor.clone())?;
        self.append(
            by,
            Entry::new(
                "actor.register",
                ResourceRef::audit_log(),
                json!({"actor_id": actor.id, "role": actor.role, "supervisees": actor.supervisees, "cohort": actor.cohort}),
            ),
            now,
        )?;
        *dir = next;
        if actor.role == Role::Student {
            write(&self.students).insert(
                actor.id.clone(),
                Arc::new(Mutex::new(StudentState::new(actor.id.clone(), self.config.summary_budget))),
            );
        }
        Ok(())
    }

    pub fn consent(&self, actor: &ActorId, student: &StudentId) -> EngineResult<Vec<ConsentRecord>> {
        self.authorize(actor, Action::Read, &ResourceRef::of_student(ResourceClass::Consent, student))?;
        self.cell(student)?;
        Ok(read(&self.consent).all_for(student))
    }

    pub fn set_consent(
        &self,
        actor: &ActorId,
        student: &StudentId,
        scope: ConsentScope,
        state: ConsentState,
    ) -> EngineResult<ConsentRecord> {
        let resource = ResourceRef::of_student(ResourceClass::Consent, student);
        self.authorize(actor, Action::Write, &resource)?;
        self.cell(student)?;
        let now = self.write_time();
        let mut reg = write(&self.consent);
        let old = reg.get(student, scope).state;
        self.append(
            actor,
            Entry::new("consent.set", resource, json!({"scope": scope, "old": old, "new": state})),
            now,
        )?;
        Ok(reg.set(student, scope, state, now))
    }

    // ---- context store ----

    pub fn put_item(
        &self,
        actor: &ActorId,
        student: &StudentId,
        id: Option<ItemId>,
        item: NewItem,
    ) -> EngineResult<ContextItem> {
        let resource = ResourceRef::context(student);
        self.authorize(actor, Action::Write, &resource)?;
        let id = self.claim_item_id(student, id, "item")?;
        let out = self.mutate_student(actor, student, |st, now| {
            let kind = item.kind;
            let body_digest = digest(&item.body.content);
            let stored = st.store.put_item(id.clone(), item, now)?.clone();
            if matches!(kind, ItemKind::Document | ItemKind::ResearchDescription) {
                st.index = None;
            }
            if kind == ItemKind::Artefact {
                set_state_fact(st.store.graph_mut(), id.as_str(), "artefact-state", "Draft", now)?;
            }
            let prepared = self.reevaluate_goals(st, now)?;
            let payload = json!({"item_id": id, "kind": kind, "body_digest": body_digest, "prepared_summaries": prepared});
            Ok((stored, Entry::new("context.put", resource, payload)))
        })?;
        self.register_items(student, [out.id.clone()]);
        Ok(out)
    }

    pub fn get_items(&self, actor: &ActorId, student: &StudentId, filter: &ItemFilter) -> EngineResult<Vec<ContextItem>> {
        self.authorize(actor, Action::Read, &ResourceRef::context(student))?;
        self.read_student(student, |st| Ok(st.store.get_items(filter).into_iter().cloned().collect()))
    }

    pub fn get_item(&self, actor: &ActorId, student: &StudentId, id: &ItemId) -> EngineResult<ContextItem> {
        self.authorize(actor, Action::Read, &ResourceRef::context(student))?;
        self.read_student(student, |st| Ok(st.store.get_item(id)?.clone()))
    }

    pub fn edit_item(&self, actor: &ActorId, student: &StudentId, id: &ItemId, edit: ItemEdit) -> EngineResult<ContextItem> {
        let resource = ResourceRef::context(student);
        self.authorize(actor, Action::Write, &resource)?;
        self.mutate_student(actor, student, |st, now| {
            let fields: Vec<&str> = [
                ("body", edit.body.is_some()),
                ("citations", edit.citations.is_some()),
                ("tags", edit.tags.is_some()),
                ("key_steps", edit.key_steps.is_some()),
                ("claims", edit.claims.is_some()),
            ]
            .into_iter()
            .filter_map(|(f, set)| set.then_some(f))
            .collect();
            let item = st.store.edit_item(id, edit, now)?.clone();
            if matches!(item.kind, ItemKind::Document | ItemKind::ResearchDescription) {
                st.index = None;
            }
            let prepared = self.reevaluate_goals(st, now)?;
            let payload = json!({
                "item_id": id,
                "fields": fields,
                "revision": item.revision,
                "body_digest": digest(&item.body.content),
                "prepared_summaries": prepared,
            });
            Ok((item, Entry::new("context.edit", resource, payload)))
        })
    }

    /// Hard delete. The audit event keeps only the body digest.
    pub fn purge_item(&self, actor: &ActorId, student: &StudentId, id: &ItemId) -> EngineResult<()> {
        let resource = ResourceRef::context(student);
        self.authorize(actor, Action::Purge, &resource)?;
        self.mutate_student(actor, student, |st, now| {
            let removed = st.store.purge_item(id)?;
            st.index = None;
            if st.pending.is_some() {
                st.pending = None;
            }
            let prepared = self.reevaluate_goals(st, now)?;
            let payload = json!({
                "item_id": id,
                "kind": removed.kind,
                "body_digest": digest(&removed.body.content),
                "prepared_summaries": prepared,
            });
            Ok(((), Entry::new("context.purge", resource, payload)))
        })
    }

    /// Citation-resolution check against the student's documents and the
    /// current policy corpus.
    pub fn verify_item(&self, actor: &ActorId, student: &StudentId, id: &ItemId) -> EngineResult<ContextItem> {
        let resource = ResourceRef::context(student);
        self.authorize(actor, Action::Write, &resource)?;
        let policy = read(&self.policy).handle.clone();
        self.mutate_student(actor, student, |st, now| {
            let own = st.store.corpus();
            let outcome = st.store.run_verifier(id, &[&own, policy.index().corpus()], now)?;
            let prepared = self.reevaluate_goals(st, now)?;
            let item = st.store.get_item(id)?.clone();
            let payload = json!({"item_id": id, "verification": outcome, "prepared_summaries": prepared});
            Ok((item, Entry::new("context.verify", resource, payload)))
        })
    }

    /// Adds documents to the student's own corpus, keeping their ids.
    pub fn ingest_student_documents(
        &self,
        actor: &ActorId,
        student: &StudentId,
        documents: Vec<Document>,
    ) -> EngineResult<Vec<ItemId>> {
        let resource = ResourceRef::of_student(ResourceClass::StudentCorpus, student);
        self.authorize(actor, Action::Write, &resource)?;
        let ids = documents
            .iter()
            .map(|d| self.claim_item_id(student, Some(ItemId::new(d.id.as_str())), "doc"))
            .collect::<EngineResult<Vec<_>>>()?;
        let out = self.mutate_student(actor, student, |st, now| {
            let mut digests = Vec::new();
            for (doc, id) in documents.into_iter().zip(&ids) {
                digests.push(json!({"item_id": id, "body_digest": digest(&doc.body)}));
                let mut item = NewItem::new(ItemKind::Document, ItemBody::text(doc.body));
                if !doc.title.is_empty() {
                    item = item.with_tag(format!("title:{}", doc.title));
                }
                st.store.put_item(id.clone(), item, now)?;
            }
            st.index = None;
            let prepared = self.reevaluate_goals(st, now)?;
            let payload = json!({"documents": digests, "prepared_summaries": prepared});
            Ok((ids.clone(), Entry::new("corpus.ingest", resource, payload)))
        })?;
        self.register_items(student, out.iter().cloned());
        Ok(out)
    }

    pub fn readiness(&self, actor: &ActorId, student: &StudentId) -> EngineResult<ReadinessState> {
        self.authorize(actor, Action::Read, &ResourceRef::context(student))?;
        self.read_student(student, |st| Ok(st.store.readiness().clone()))
    }

    pub fn update_readiness(
        &self,
        actor: &ActorId,
        student: &StudentId,
        component: ReadinessComponent,
        value: f64,
    ) -> EngineResult<ReadinessState> {
        let resource = ResourceRef::context(student);
        self.authorize(actor, Action::Write, &resource)?;
        self.mutate_student(actor, student, |st, now| {
            let old = st.store.readiness().get(component);
            let state = st.store.update_readiness(component, value, now)?.clone();
            let payload = json!({"component": component, "old": old, "new": value});
            Ok((state, Entry::new("readiness.update", resource, payload)))
        })
    }

    /// Zip of the student's items, conversation, readiness and facts.
    pub fn export(&self, actor: &ActorId, student: &StudentId) -> EngineResult<Vec<u8>> {
        self.authorize(actor, Action::Read, &ResourceRef::context(student))?;
        self.read_student(student, |st| Ok(st.store.export_zip(Cursor::new(Vec::new()))?.into_inner()))
    }

    /// Facts live at `t` in the student's temporal graph.
    pub fn timeline(&self, actor: &ActorId, student: &StudentId, at: Timestamp) -> EngineResult<Vec<crate::tkg::TemporalFact>> {
        self.authorize(actor, Action::Read, &ResourceRef::context(student))?;
        self.read_student(student, |st| Ok(st.store.graph().snapshot_at(at).into_iter().cloned().collect()))
    }

    pub fn timeline_diff(
        &self,
        actor: &ActorId,
        student: &StudentId,
        t1: Timestamp,
        t2: Timestamp,
    ) -> EngineResult<crate::tkg::FactDiff> {
        self.authorize(actor, Action::Read, &ResourceRef::context(student))?;
        self.read_student(student, |st| Ok(st.store.graph().diff(t1, t2)?))
    }

    // ---- assistant ----

    /// Routes, plans and answers one student turn, then stores the response
    /// as an artefact. A pending clarifying question takes this turn as its
    /// reply.
    pub fn query(&self, actor: &ActorId, student: &StudentId, req: QueryRequest) -> EngineResult<QueryReply> {
        let resource = ResourceRef::of_student(ResourceClass::Assistant, student);
        self.authorize(actor, Action::Query, &resource)?;
        if req.text.trim().is_empty() {
            return Err(OrchestratorError::EmptyQuery.into());
        }
        let policy = read(&self.policy).handle.clone();
        let artefact_id = self.claim_item_id(student, None, "art")?;
        let reply = self.mutate_student(actor, student, |st, now| {
            let screening_consent = read(&self.consent).is_on(student, ConsentScope::WellbeingScreening);
            let (query, topic, plan, clarification) = match st.pending.take() {
                Some(p) => (p.query, p.topic, p.plan, Some(req.text.clone())),
                None => {
                    let topic = req.topic.clone().or_else(|| infer_topic(&st.patches, &req.text));
                    let ctx = RouteContext {
                        student_id: Some(student.clone()),
                        attachment: req.attachment,
                    };
                    let route = self.orchestrator.classify(&req.text, &ctx)?;
                    let compiled = st.patches.compile(student, topic.as_deref(), now);
                    let plan = self.orchestrator.planner.plan(&route, &compiled)?;
                    (req.text.clone(), topic, plan, None)
                }
            };
            let turn = st.store.next_turn_index();
            let seed = req.seed.unwrap_or_else(|| self.config.seed.wrapping_add(turn));
            let input = QueryInput {
                query: query.clone(),
                summary: st.store.summary().text.clone(),
                clarification: clarification.clone(),
                screening_consent,
            };
            let index = st.index()?;
            let sources = RetrievalSources {
                student: Some(&index),
                policy: &policy,
            };
            let trace_id = self.ids.next("trace");
            let response = self.orchestrator.execute(&plan, &input, sources, seed, trace_id)?;
            if response.awaiting_reply {
                st.pending = Some(PendingQuery {
                    query: query.clone(),
                    topic: topic.clone(),
                    plan: plan.clone(),
                });
            }
            st.store.update_rolling_summary(vec![
                Turn {
                    index: turn,
                    speaker: Speaker::Student,
                    text: req.text.clone(),
                    refs: Vec::new(),
                },
                Turn {
                    index: turn + 1,
                    speaker: Speaker::Assistant,
                    text: response.text.clone(),
                    refs: vec![turn],
                },
            ])?;

            let answered = response.mode == GenerationMode::Answer
                && !response.awaiting_reply
                && response.route.kind != RouteKind::Wellbeing;
            let mut item = NewItem::new(ItemKind::Artefact, ItemBody::text(response.text.clone()))
                .with_citations(response.backlinks.clone())
                .with_tag(format!("route:{}", format!("{:?}", response.route.kind).to_lowercase()));
            if answered {
                item.claims = ClaimTally {
                    total: 1,
                    cited: u32::from(!response.backlinks.is_empty()),
                };
            }
            st.store.put_item(artefact_id.clone(), item, now)?;
            set_state_fact(st.store.graph_mut(), artefact_id.as_str(), "artefact-state", "Draft", now)?;
            if let Some(coverage) = st.store.citation_coverage_estimate() {
                if coverage != st.store.readiness().citation_coverage {
                    st.store.update_readiness(ReadinessComponent::CitationCoverage, coverage, now)?;
                }
            }
            let prepared = self.reevaluate_goals(st, now)?;
            let payload = json!({
                "trace_id": response.trace_id,
                "artefact_id": artefact_id,
                "route": response.route.kind,
                "rule": response.route.rule,
                "plan_digest": response.trace.plan_digest,
                "query_digest": digest(&req.text),
                "response_digest": digest(&response.text),
                "backlinks": response.backlinks.iter().map(|b| b.document_id.clone()).collect::<Vec<_>>(),
                "active_patches": response.trace.active_patches,
                "awaiting_reply": response.awaiting_reply,
                "seed": seed,
                "prepared_summaries": prepared,
            });
            let reply = QueryReply {
                artefact_id: artefact_id.clone(),
                topic,
                response,
            };
            Ok((reply, Entry::new("assistant.query", resource, payload)))
        })?;
        self.register_items(student, [reply.artefact_id.clone()]);
        Ok(reply)
    }

    /// The plan a query would run under right now, without executing it.
    pub fn preview_plan(&self, actor: &ActorId, student: &StudentId, req: &QueryRequest) -> EngineResult<CapabilityPlan> {
        self.authorize(actor, Action::Query, &ResourceRef::of_student(ResourceClass::Assistant, student))?;
        let now = self.now();
        self.read_student(student, |st| {
            let topic = req.topic.clone().or_else(|| infer_topic(&st.patches, &req.text));
            let ctx = RouteContext {
                student_id: Some(student.clone()),
                attachment: req.attachment,
            };
            let route = self.orchestrator.classify(&req.text, &ctx)?;
            let compiled = st.patches.compile(student, topic.as_deref(), now);
            Ok(self.orchestrator.planner.plan(&route, &compiled)?)
        })
    }

    // ---- moderation ----

    pub fn share(&self, actor: &ActorId, artefact: &ItemId) -> EngineResult<ModerationCase> {
        let student = self.owner_of_item(artefact)?;
        let resource = ResourceRef::of_student(ResourceClass::Artefact, &student);
        self.authorize(actor, Action::Share, &resource)?;
        let supervisors = self.supervisors_of(&student);
        let case = self.mutate_student(actor, &student, |st, now| {
            let item = st.store.get_item(artefact)?;
            if item.kind != ItemKind::Artefact {
                return Err(SupervisionError::NotAnArtefact(artefact.clone()).into());
            }
            if st.open_case_for(artefact).is_some() {
                return Err(SupervisionError::CaseOpen(artefact.clone()).into());
            }
            if supervisors.is_empty() {
                return Err(SupervisionError::NoSupervisor.into());
            }
            let id = CaseId::new(self.ids.next("case"));
            let mut case = ModerationCase::new(id.clone(), artefact.clone(), student.clone(), supervisors.into_iter().collect());
            case.transition(CaseState::Shared, now, actor)?;
            set_state_fact(st.store.graph_mut(), artefact.as_str(), "artefact-state", "Shared", now)?;
            st.cases.insert(id.clone(), case.clone());
            let payload = json!({"case_id": id, "artefact_id": artefact, "supervisors": case.supervisors});
            Ok((case, Entry::new("case.share", ResourceRef::of_student(ResourceClass::Case, &student), payload)))
        })?;
        write(&self.case_index).insert(case.id.clone(), student);
        Ok(case)
    }

    pub fn queue(&self, actor: &ActorId, supervisor: &ActorId) -> EngineResult<Vec<CaseView>> {
        let me = self.authorize(actor, Action::Read, &ResourceRef::queue(supervisor))?;
        let mut out = Vec::new();
        for student in &me.supervisees {
            let Ok(cell) = self.cell(student) else { continue };
            let st = lock(&cell);
            for case in st.cases.values() {
                if case.state.is_open() && case.supervisors.contains(supervisor) {
                    let artefact = st.store.get_item(&case.artefact_id).ok().cloned();
                    out.push(CaseView {
                        case: case.clone(),
                        artefact,
                    });
                }
            }
        }
        out.sort_by(|a, b| a.case.shared_at.cmp(&b.case.shared_at).then_with(|| a.case.id.cmp(&b.case.id)));
        Ok(out)
    }

    pub fn get_case(&self, actor: &ActorId, case: &CaseId) -> EngineResult<ModerationCase> {
        let student = self.owner_of_case(case)?;
        self.authorize(actor, Action::Read, &ResourceRef::of_student(ResourceClass::Case, &student))?;
        self.read_student(&student, |st| Ok(st.cases[case].clone()))
    }

    pub fn start_review(&self, actor: &ActorId, case_id: &CaseId) -> EngineResult<ModerationCase> {
        let student = self.owner_of_case(case_id)?;
        let resource = ResourceRef::of_student(ResourceClass::Case, &student);
        self.authorize(actor, Action::Review, &resource)?;
        self.mutate_student(actor, &student, |st, now| {
            let case = st.cases.get_mut(case_id).expect("indexed case exists");
            if !case.supervisors.contains(actor) {
                return Err(EngineError::denied("case-owner-only"));
            }
            case.transition(CaseState::UnderReview, now, actor)?;
            case.reviewer = Some(actor.clone());
            let case = case.clone();
            set_state_fact(st.store.graph_mut(), case.artefact_id.as_str(), "artefact-state", "UnderReview", now)?;
            let payload = json!({"case_id": case_id, "reviewer": actor});
            Ok((case, Entry::new("case.review", resource, payload)))
        })
    }

    /// Returns feedback, optionally attaching a behaviour patch. The feedback
    /// and patch are recorded together as one policy update and one event.
    pub fn return_case(&self, actor: &ActorId, case_id: &CaseId, req: ReturnRequest) -> EngineResult<ReturnOutcome> {
        let student = self.owner_of_case(case_id)?;
        let resource = ResourceRef::of_student(ResourceClass::Case, &student);
        self.authorize(actor, Action::Review, &resource)?;
        if req.patch.is_some() {
            self.authorize(actor, Action::Write, &ResourceRef::of_student(ResourceClass::Patches, &student))?;
        }
        self.mutate_student(actor, &student, |st, now| {
            let case = st.cases.get(case_id).expect("indexed case exists").clone();
            if case.state == CaseState::UnderReview && case.reviewer.as_ref() != Some(actor) {
                return Err(EngineError::denied("case-owner-only"));
            }
            if case.state != CaseState::UnderReview {
                return Err(SupervisionError::IllegalTransition {
                    from: case.state,
                    to: CaseState::Returned,
                }
                .into());
            }
            if req.feedback.trim().is_empty() {
                return Err(SupervisionError::EmptyFeedback.into());
            }
            let patch = match req.patch {
                Some(draft) => {
                    let id = PatchId::new(self.ids.next("patch"));
                    let p = st.patches.attach(id, actor.clone(), student.clone(), draft, now)?.clone();
                    st.store
                        .graph_mut()
                        .assert_fact(student.as_str(), "patch-attached", p.id.as_str(), now, now)?;
                    Some(p)
                }
                None => None,
            };
            let update = PolicyUpdate {
                id: self.ids.next("pu"),
                patch_id: patch.as_ref().map(|p| p.id.clone()),
                feedback_text: req.feedback.clone(),
                artefact_id: case.artefact_id.clone(),
                case_id: Some(case_id.clone()),
                recorded_at: now,
            };
            st.updates.push(update.clone());
            let case = st.cases.get_mut(case_id).expect("present");
            case.feedback_ref = Some(update.id.clone());
            case.patch_ref = update.patch_id.clone();
            case.transition(CaseState::Returned, now, actor)?;
            let case = case.clone();
            set_state_fact(st.store.graph_mut(), case.artefact_id.as_str(), "artefact-state", "Returned", now)?;
            let payload = json!({
                "case_id": case_id,
                "policy_update": update.id,
                "feedback_digest": digest(&update.feedback_text),
                "patch": patch.as_ref().map(|p| json!({"id": p.id, "scope": p.scope, "directive": p.directive, "supersedes": p.supersedes})),
            });
            let out = ReturnOutcome { case, update, patch };
            Ok((out, Entry::new("case.return", resource, payload)))
        })
    }

    /// The student acknowledges returned feedback; the artefact is marked
    /// moderated and the case moves to Applied.
    pub fn acknowledge(&self, actor: &ActorId, case_id: &CaseId) -> EngineResult<ModerationCase> {
        self.student_case_step(actor, case_id, CaseState::Applied, "case.apply")
    }

    pub fn close_case(&self, actor: &ActorId, case_id: &CaseId) -> EngineResult<ModerationCase> {
        self.student_case_step(actor, case_id, CaseState::Closed, "case.close")
    }

    fn student_case_step(
        &self,
        actor: &ActorId,
        case_id: &CaseId,
        to: CaseState,
        action: &'static str,
    ) -> EngineResult<ModerationCase> {
        let student = self.owner_of_case(case_id)?;
        let resource = ResourceRef::of_student(ResourceClass::Case, &student);
        self.authorize(actor, Action::Write, &resource)?;
        self.mutate_student(actor, &student, |st, now| {
            let case = st.cases.get_mut(case_id).expect("indexed case exists");
            case.transition(to, now, actor)?;
            let case = case.clone();
            if to == CaseState::Applied {
                if let Ok(item) = st.store.get_item(&case.artefact_id) {
                    let mut tags = item.tags.clone();
                    tags.insert(TAG_MODERATED.to_owned());
                    st.store.edit_item(
                        &case.artefact_id,
                        ItemEdit {
                            tags: Some(tags),
                            ..ItemEdit::default()
                        },
                        now,
                    )?;
                }
            }
            set_state_fact(st.store.graph_mut(), case.artefact_id.as_str(), "artefact-state", &to.to_string(), now)?;
            let payload = json!({"case_id": case_id, "state": to});
            Ok((case, Entry::new(action, resource, payload)))
        })
    }

    pub fn cases_of(&self, actor: &ActorId, student: &StudentId) -> EngineResult<Vec<ModerationCase>> {
        self.authorize(actor, Action::Read, &ResourceRef::of_student(ResourceClass::Case, student))?;
        self.read_student(student, |st| Ok(st.cases.values().cloned().collect()))
    }

    // ---- patches ----

    pub fn patch_digest(&self, actor: &ActorId, student: &StudentId, topic: Option<&str>) -> EngineResult<PatchDigest> {
        self.authorize(actor, Action::Read, &ResourceRef::of_student(ResourceClass::Patches, student))?;
        let now = self.now();
        self.read_student(student, |st| {
            Ok(PatchDigest {
                text: render_digest(&st.patches, student, now),
                patches: st.patches.patches().to_vec(),
                compiled: st.patches.compile(student, topic, now),
                updates: st.updates.clone(),
            })
        })
    }

    // ---- goals and summaries ----

    pub fn create_goal(&self, actor: &ActorId, student: &StudentId, spec: GoalSpec) -> EngineResult<GoalStatus> {
        let resource = ResourceRef::of_student(ResourceClass::Goal, student);
        self.authorize(actor, Action::Write, &resource)?;
        self.mutate_student(actor, student, |st, now| {
            let id = GoalId::new(self.ids.next("goal"));
            let goal = TaskGoal::create(id.clone(), student.clone(), spec, now)?;
            let graph = st.store.graph_mut();
            graph.assert_fact(id.as_str(), "goal:threshold", goal.threshold.to_string(), now, now)?;
            st.goals.insert(id.clone(), goal);
            let prepared = self.reevaluate_goals(st, now)?;
            let goal = st.goals[&id].clone();
            let payload = json!({
                "goal_id": id,
                "metric": goal.metric,
                "target": goal.target,
                "threshold": goal.threshold,
                "release_rule": goal.release_rule,
                "prepared_summaries": prepared,
            });
            let status = GoalStatus {
                completion: goal.last_completion,
                goal,
            };
            Ok((status, Entry::new("goal.create", resource, payload)))
        })
    }

    /// Applies a goal change. The audit event lists every field's old and new
    /// value.
    pub fn update_goal(&self, actor: &ActorId, student: &StudentId, goal_id: &GoalId, change: GoalChange) -> EngineResult<GoalStatus> {
        let resource = ResourceRef::of_student(ResourceClass::Goal, student);
        self.authorize(actor, Action::Write, &resource)?;
        self.mutate_student(actor, student, |st, now| {
            let goal = st
                .goals
                .get_mut(goal_id)
                .ok_or_else(|| EngineError::NotFound(format!("goal `{goal_id}`")))?;
            let old_threshold = goal.threshold;
            let edits = goal.apply(change, now)?;
            let threshold = goal.threshold;
            if edits.iter().any(|e| e.field == "threshold") {
                set_state_fact(st.store.graph_mut(), goal_id.as_str(), "goal:threshold", &threshold.to_string(), now)?;
            }
            let prepared = self.reevaluate_goals_after_edit(st, Some((goal_id, old_threshold)), now)?;
            let goal = st.goals[goal_id].clone();
            let payload = json!({"goal_id": goal_id, "edits": edits, "prepared_summaries": prepared});
            let status = GoalStatus {
                completion: goal.last_completion,
                goal,
            };
            Ok((status, Entry::new("goal.update", resource, payload)))
        })
    }

    pub fn goals(&self, actor: &ActorId, student: &StudentId) -> EngineResult<Vec<GoalStatus>> {
        self.authorize(actor, Action::Read, &ResourceRef::of_student(ResourceClass::Goal, student))?;
        self.read_student(student, |st| {
            let items = st.store.get_items(&ItemFilter::default());
            st.goals
                .values()
                .map(|g| {
                    Ok(GoalStatus {
                        completion: evaluate_goal(g, &items, &self.evaluators)?,
                        goal: g.clone(),
                    })
                })
                .collect()
        })
    }

    pub fn summaries(&self, actor: &ActorId, student: &StudentId) -> EngineResult<Vec<ProgressSummary>> {
        self.authorize(actor, Action::Write, &ResourceRef::summary(student))?;
        self.read_student(student, |st| Ok(st.summaries.values().cloned().collect()))
    }

    pub fn curate_summary(
        &self,
        actor: &ActorId,
        student: &StudentId,
        id: &SummaryId,
        narrative: Option<String>,
        links: Option<Vec<ItemId>>,
    ) -> EngineResult<ProgressSummary> {
        let resource = ResourceRef::summary(student);
        self.authorize(actor, Action::Write, &resource)?;
        self.mutate_student(actor, student, |st, _now| {
            if let Some(ls) = &links {
                for l in ls {
                    st.store.get_item(l)?;
                }
            }
            let s = st
                .summaries
                .get_mut(id)
                .ok_or_else(|| EngineError::NotFound(format!("summary `{id}`")))?;
            s.curate(narrative, links)?;
            let payload = json!({"summary_id": id, "narrative_digest": digest(&s.narrative), "links": s.artefact_links});
            Ok((s.clone(), Entry::new("summary.curate", resource, payload)))
        })
    }

    /// Confirms curation. Under AutoSendOnCross the summary is released in
    /// the same step when consent is on at this instant.
    pub fn confirm_summary(&self, actor: &ActorId, student: &StudentId, id: &SummaryId) -> EngineResult<ProgressSummary> {
        let resource = ResourceRef::summary(student);
        self.authorize(actor, Action::Release, &resource)?;
        let supervisors = self.supervisors_of(student);
        self.mutate_student(actor, student, |st, now| {
            let consent_on = read(&self.consent).is_on(student, ConsentScope::AutoSendSummary);
            let s = st
                .summaries
                .get_mut(id)
                .ok_or_else(|| EngineError::NotFound(format!("summary `{id}`")))?;
            s.confirm(now)?;
            let mut released = false;
            if s.release_rule == ReleaseRule::AutoSendOnCross && consent_on && !supervisors.is_empty() {
                s.release(consent_on, supervisors, now)?;
                released = true;
            }
            let payload = json!({
                "summary_id": id,
                "released": released,
                "consent_on": consent_on,
                "released_to": s.released_to,
            });
            Ok((s.clone(), Entry::new("summary.confirm", resource, payload)))
        })
    }

    /// Explicit release; consent must be on at this instant.
    pub fn release_summary(&self, actor: &ActorId, student: &StudentId, id: &SummaryId) -> EngineResult<ProgressSummary> {
        let resource = ResourceRef::summary(student);
        self.authorize(actor, Action::Release, &resource)?;
        let supervisors = self.supervisors_of(student);
        self.mutate_student(actor, student, |st, now| {
            let consent_on = read(&self.consent).is_on(student, ConsentScope::AutoSendSummary);
            let s = st
                .summaries
                .get_mut(id)
                .ok_or_else(|| EngineError::NotFound(format!("summary `{id}`")))?;
            s.release(consent_on, supervisors, now)?;
            let payload = json!({"summary_id": id, "released_to": s.released_to});
            Ok((s.clone(), Entry::new("summary.release", resource, payload)))
        })
    }

    /// Confirms summaries whose curation window has lapsed. Each affected
    /// student gets one System-attributed event. No-op without a timeout.
    pub fn sweep_auto_confirm(&self) -> EngineResult<Vec<SummaryId>> {
        let Some(after) = self.config.auto_confirm_after else {
            return Ok(Vec::new());
        };
        let system = Actor::system().id;
        let students: Vec<StudentId> = read(&self.students).keys().cloned().collect();
        let mut out = Vec::new();
        for student in students {
            let due = self.read_student(&student, |st| {
                let now = self.now();
                Ok(st
                    .summaries
                    .values()
                    .filter(|s| s.state == SummaryState::Curation && s.prepared_at.plus(after) <= now)
                    .map(|s| s.id.clone())
                    .collect::<Vec<_>>())
            })?;
            if due.is_empty() {
                continue;
            }
            let supervisors = self.supervisors_of(&student);
            let ids = self.mutate_student(&system, &student, |st, now| {
                let consent_on = read(&self.consent).is_on(&student, ConsentScope::AutoSendSummary);
                let mut released = Vec::new();
                for id in &due {
                    let s = st.summaries.get_mut(id).expect("listed above");
                    s.confirm(now)?;
                    if s.release_rule == ReleaseRule::AutoSendOnCross && consent_on && !supervisors.is_empty() {
                        s.release(consent_on, supervisors.clone(), now)?;
                        released.push(id.clone());
                    }
                }
                let payload = json!({"confirmed": due, "released": released, "consent_on": consent_on});
                Ok((due.clone(), Entry::new("summary.auto-confirm", ResourceRef::summary(&student), payload)))
            })?;
            out.extend(ids);
        }
        Ok(out)
    }

    /// Released summaries addressed to `supervisor`, for supervisees only.
    pub fn supervisor_summaries(&self, actor: &ActorId, supervisor: &ActorId) -> EngineResult<Vec<ReleasedSummary>> {
        let me = self.authorize(actor, Action::Read, &ResourceRef::queue(supervisor))?;
        let mut out = Vec::new();
        for student in &me.supervisees {
            if !authorize(&me, Action::Read, &ResourceRef::summary(student)).is_allow() {
                continue;
            }
            let Ok(cell) = self.cell(student) else { continue };
            let st = lock(&cell);
            out.extend(
                st.summaries
                    .values()
                    .filter(|s| s.state == SummaryState::Released && s.released_to.contains(supervisor))
                    .filter_map(ProgressSummary::released_view),
            );
        }
        out.sort_by(|a, b| a.released_at.cmp(&b.released_at).then_with(|| a.id.cmp(&b.id)));
        Ok(out)
    }

    // ---- milestones ----

    pub fn put_milestone(&self, actor: &ActorId, student: &StudentId, plan: MilestonePlan) -> EngineResult<MilestoneStatus> {
        let resource = ResourceRef::of_student(ResourceClass::Goal, student);
        self.authorize(actor, Action::Write, &resource)?;
        self.mutate_student(actor, student, |st, now| {
            let f = forecast(&plan, now)?;
            let graph = st.store.graph_mut();
            set_state_fact(graph, &plan.milestone_id, "milestone:due", &plan.due_at.to_string(), now)?;
            st.milestones.insert(plan.milestone_id.clone(), plan.clone());
            let payload = json!({
                "milestone_id": plan.milestone_id,
                "due_at": plan.due_at,
                "checkpoints": plan.checkpoints.len(),
                "completed": f.completed,
            });
            Ok((MilestoneStatus { plan, forecast: f }, Entry::new("milestone.put", resource, payload)))
        })
    }

    pub fn milestones(&self, actor: &ActorId, student: &StudentId) -> EngineResult<Vec<MilestoneStatus>> {
        self.authorize(actor, Action::Read, &ResourceRef::of_student(ResourceClass::Goal, student))?;
        let now = self.now();
        self.read_student(student, |st| {
            st.milestones
                .values()
                .map(|p| {
                    Ok(MilestoneStatus {
                        plan: p.clone(),
                        forecast: forecast(p, now)?,
                    })
                })
                .collect::<EngineResult<Vec<_>>>()
        })
    }

    // ---- aggregates ----

    /// Consented cohort signals; groups below the k-anonymity floor vanish.
    pub fn aggregates(&self, actor: &ActorId) -> EngineResult<Vec<AggregateSignal>> {
        self.authorize(actor, Action::Read, &ResourceRef::aggregates())?;
        let now = self.now();
        let students: Vec<Actor> = read(&self.directory).students().cloned().collect();
        let consenting: Vec<bool> = {
            let reg = read(&self.consent);
            students.iter().map(|s| reg.is_on(&s.id, ConsentScope::AggregateSignals)).collect()
        };
        let mut members = Vec::new();
        for (s, consenting) in students.iter().zip(consenting) {
            let (mean_completion, on_track) = if consenting {
                self.read_student(&s.id, |st| {
                    let items = st.store.get_items(&ItemFilter::default());
                    let completions = st
                        .goals
                        .values()
                        .map(|g| evaluate_goal(g, &items, &self.evaluators))
                        .collect::<Result<Vec<_>, _>>()?;
                    let mean = (!completions.is_empty()).then(|| completions.iter().sum::<f64>() / completions.len() as f64);
                    let mut on_track = (!st.milestones.is_empty()).then_some(true);
                    for p in st.milestones.values() {
                        if forecast(p, now)?.slippage_warning.is_some() {
                            on_track = Some(false);
                        }
                    }
                    Ok((mean, on_track))
                })?
            } else {
                (None, None)
            };
            members.push(CohortMember {
                student_id: s.id.clone(),
                cohort: s.cohort.clone().unwrap_or_else(|| DEFAULT_COHORT.to_owned()),
                consenting,
                mean_completion,
                on_track,
            });
        }
        Ok(emit_aggregates(&members, self.config.k_min))
    }

    // ---- learning guards ----

    pub fn create_practice(
        &self,
        actor: &ActorId,
        student: &StudentId,
        prompt: String,
        topic: Option<String>,
    ) -> EngineResult<PracticeItem> {
        let resource = ResourceRef::of_student(ResourceClass::Practice, student);
        self.authorize(actor, Action::Write, &resource)?;
        self.mutate_student(actor, student, |st, now| {
            let item = self.scheduler.create(self.ids.next("practice"), student.clone(), prompt, topic, now);
            st.practice.insert(item.id.clone(), item.clone());
            let payload = json!({"practice_id": item.id, "due_at": item.due_at, "topic": item.topic});
            Ok((item, Entry::new("practice.create", resource, payload)))
        })
    }

    pub fn review_practice(&self, actor: &ActorId, student: &StudentId, id: &str, success: bool) -> EngineResult<PracticeItem> {
        let resource = ResourceRef::of_student(ResourceClass::Practice, student);
        self.authorize(actor, Action::Write, &resource)?;
        self.mutate_student(actor, student, |st, now| {
            let item = st
                .practice
                .get_mut(id)
                .ok_or_else(|| PatchError::UnknownPracticeItem(id.to_owned()))?;
            self.scheduler.review(item, now, success)?;
            let payload = json!({
                "practice_id": id,
                "success": success,
                "interval_index": item.interval_index,
                "due_at": item.due_at,
            });
            Ok((item.clone(), Entry::new("practice.review", resource, payload)))
        })
    }

    pub fn practice_due(&self, actor: &ActorId, student: &StudentId, as_of: Option<Timestamp>) -> EngineResult<Vec<PracticeItem>> {
        self.authorize(actor, Action::Read, &ResourceRef::of_student(ResourceClass::Practice, student))?;
        let as_of = as_of.unwrap_or_else(|| self.now());
        self.read_student(student, |st| Ok(due_list(st.practice.values(), as_of).into_iter().cloned().collect()))
    }

    pub fn practice_items(&self, actor: &ActorId, student: &StudentId) -> EngineResult<Vec<PracticeItem>> {
        self.authorize(actor, Action::Read, &ResourceRef::of_student(ResourceClass::Practice, student))?;
        self.read_student(student, |st| {
            let mut v: Vec<PracticeItem> = st.practice.values().cloned().collect();
            v.sort_by(|a, b| a.due_at.cmp(&b.due_at).then_with(|| a.id.cmp(&b.id)));
            Ok(v)
        })
    }

    /// Opens a low-support check on an artefact. Supervisors may seed the
    /// questions when the artefact has no recorded key steps.
    pub fn start_check(
        &self,
        actor: &ActorId,
        artefact: &ItemId,
        seed_questions: Vec<String>,
    ) -> EngineResult<CheckSession> {
        let student = self.owner_of_item(artefact)?;
        let resource = ResourceRef::of_student(ResourceClass::CompetenceCheck, &student);
        self.authorize(actor, Action::Write, &resource)?;
        self.mutate_student(actor, &student, |st, now| {
            let mut item = st.store.get_item(artefact)?.clone();
            if item.key_steps.is_empty() {
                item.key_steps = seed_questions;
            }
            let session = low_support_check(self.ids.next("check"), &item, now)?;
            st.checks.insert(session.id.clone(), session.clone());
            let payload = json!({"check_id": session.id, "artefact_id": artefact, "questions": session.questions.len()});
            Ok((session, Entry::new("check.start", resource, payload)))
        })
    }

    /// Records the student's answers; the transcript is stored as an
    /// unverified artefact.
    pub fn submit_check(&self, actor: &ActorId, student: &StudentId, check: &str, answers: Vec<String>) -> EngineResult<ContextItem> {
        let resource = ResourceRef::of_student(ResourceClass::CompetenceCheck, student);
        self.authorize(actor, Action::Write, &resource)?;
        if actor != student {
            return Err(EngineError::denied("owner-only"));
        }
        let item_id = self.claim_item_id(student, None, "art")?;
        let item = self.mutate_student(actor, student, |st, now| {
            let session = st
                .checks
                .get_mut(check)
                .ok_or_else(|| EngineError::NotFound(format!("check `{check}`")))?;
            let transcript = session.submit(answers, now)?;
            let artefact = session.artefact_id.clone();
            let item = NewItem::new(ItemKind::Artefact, ItemBody::text(transcript)).with_tag(TAG_LOW_SUPPORT_CHECK);
            let stored = st.store.put_item(item_id.clone(), item, now)?.clone();
            set_state_fact(st.store.graph_mut(), item_id.as_str(), "artefact-state", "Draft", now)?;
            let payload = json!({"check_id": check, "artefact_id": artefact, "transcript_id": item_id, "body_digest": digest(&stored.body.content)});
            Ok((stored, Entry::new("check.submit", resource, payload)))
        })?;
        self.register_items(student, [item.id.clone()]);
        Ok(item)
    }

    pub fn checks(&self, actor: &ActorId, student: &StudentId) -> EngineResult<Vec<CheckSession>> {
        self.authorize(actor, Action::Read, &ResourceRef::of_student(ResourceClass::CompetenceCheck, student))?;
        self.read_student(student, |st| Ok(st.checks.values().cloned().collect()))
    }

    // ---- policy corpus ----

    fn mutate_policy<T>(
        &self,
        actor: &ActorId,
        f: impl FnOnce(&Corpus) -> EngineResult<(Corpus, T, Value)>,
    ) -> EngineResult<T> {
        let resource = ResourceRef::policy();
        self.authorize(actor, Action::Manage, &resource)?;
        let now = self.write_time();
        let mut state = write(&self.policy);
        let (next, out, mut payload) = f(state.current())?;
        let handle = PolicyIndexHandle::new(index_corpus(next.clone())?)?;
        let version = state.versions.len() + 1;
        payload["version"] = json!(version);
        self.append(actor, Entry::new("policy.update", resource, payload), now)?;
        state.handle = Arc::new(handle);
        state.versions.push(next);
        Ok(out)
    }

    /// Replaces the whole policy corpus.
    pub fn replace_policy_corpus(&self, actor: &ActorId, documents: Vec<Document>) -> EngineResult<usize> {
        self.mutate_policy(actor, |_| {
            let ids: Vec<DocumentId> = documents.iter().map(|d| d.id.clone()).collect();
            let corpus = Corpus::new("policy", CorpusClass::PolicyIndex, documents);
            corpus.check_unique_ids()?;
            Ok((corpus, ids.len(), json!({"op": "replace", "documents": ids})))
        })?;
        Ok(read(&self.policy).versions.len())
    }

    /// Adds or replaces one document. Replacing bumps its version.
    pub fn put_policy_document(&self, actor: &ActorId, mut doc: Document) -> EngineResult<Document> {
        self.mutate_policy(actor, |current| {
            let mut docs = current.documents.clone();
            if let Some(old) = docs.iter().position(|d| d.id == doc.id) {
                doc.version = doc.version.max(docs[old].version + 1);
                docs[old] = doc.clone();
            } else {
                docs.push(doc.clone());
            }
            let payload = json!({"op": "put", "document_id": doc.id, "doc_version": doc.version, "body_digest": digest(&doc.body)});
            Ok((Corpus::new("policy", CorpusClass::PolicyIndex, docs), doc, payload))
        })
    }

    pub fn remove_policy_document(&self, actor: &ActorId, id: &DocumentId) -> EngineResult<()> {
        self.mutate_policy(actor, |current| {
            let mut docs = current.documents.clone();
            let before = docs.len();
            docs.retain(|d| &d.id != id);
            if docs.len() == before {
                return Err(EngineError::NotFound(format!("policy document `{id}`")));
            }
            Ok((Corpus::new("policy", CorpusClass::PolicyIndex, docs), (), json!({"op": "remove", "document_id": id})))
        })
    }

    pub fn policy(&self, actor: &ActorId) -> EngineResult<PolicyVersion> {
        self.authorize(actor, Action::Read, &ResourceRef::policy())?;
        let state = read(&self.policy);
        Ok(PolicyVersion {
            version: state.versions.len(),
            documents: state.current().documents.clone(),
        })
    }

    pub fn policy_query(&self, actor: &ActorId, text: &str, k: usize) -> EngineResult<Vec<Hit>> {
        self.authorize(actor, Action::Query, &ResourceRef::policy())?;
        Ok(read(&self.policy).handle.query(text, k))
    }

    pub fn policy_conflicts(&self, actor: &ActorId) -> EngineResult<ConflictReport> {
        self.authorize(actor, Action::Read, &ResourceRef::policy())?;
        Ok(read(&self.policy).handle.conflict_scan())
    }

    /// Clause-level diff between two corpus versions (1-based).
    pub fn policy_diff(&self, actor: &ActorId, from: usize, to: usize) -> EngineResult<Vec<ClauseChange>> {
        self.authorize(actor, Action::Read, &ResourceRef::policy())?;
        let state = read(&self.policy);
        let get = |v: usize| {
            v.checked_sub(1)
                .and_then(|i| state.versions.get(i))
                .ok_or_else(|| EngineError::NotFound(format!("policy version {v}")))
        };
        Ok(policy_diff(get(from)?, get(to)?))
    }

    // ---- audit ----

    pub fn audit_verify(&self, actor: &ActorId) -> EngineResult<ChainStatus> {
        self.authorize(actor, Action::Verify, &ResourceRef::audit_log())?;
        Ok(lock(&self.audit).verify())
    }

    /// Events about resources the actor may act on. Verify alone does not
    /// count, since every role may verify the chain.
    pub fn audit_events(&self, actor: &ActorId) -> EngineResult<Vec<AuditEvent>> {
        let me = self.actor(actor)?;
        let log = lock(&self.audit);
        Ok(log
            .events()
            .iter()
            .filter(|e| {
                e.resource_ref
                    .parse::<ResourceRef>()
                    .is_ok_and(|r| {
                        Action::ALL
                            .iter()
                            .any(|a| *a != Action::Verify && authorize(&me, *a, &r).is_allow())
                    })
            })
            .cloned()
            .collect())
    }

    pub fn audit_len(&self) -> usize {
        lock(&self.audit).len()
    }

    /// Line-delimited export of the whole log; System only.
    pub fn audit_export(&self, actor: &ActorId) -> EngineResult<String> {
        if self.actor(actor)?.role != Role::System {
            return Err(EngineError::denied("audit-read-by-resource"));
        }
        let mut out = Vec::new();
        lock(&self.audit).export_jsonl(&mut out)?;
        Ok(String::from_utf8(out).expect("canonical json is utf-8"))
    }
}

#[cfg(test)]
mod tests;
