//! Recorded sessions that replay deterministically.
//!
//! A transcript holds everything needed to rebuild an engine (actors,
//! corpora, the mock backend's script, config and seed) plus a list of timed
//! steps with the canonical JSON each one produced. Replaying rebuilds the
//! engine on a manual clock, reruns every step and compares outputs byte for
//! byte.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::canonical::to_canonical_string;
use crate::context_store::NewItem;
use crate::engine::{Engine, EngineConfig, EngineError, QueryRequest, ReturnRequest};
use crate::governance::{Actor, AuditLog, ConsentScope, ConsentState, DigestAlgorithm, Directory, Role};
use crate::ids::{ActorId, CaseId, GoalId, ItemId, StudentId, SummaryId};
use crate::orchestrator::{MockBackend, ScriptEntry};
use crate::retrieval::Document;
use crate::supervision::{GoalChange, GoalSpec};
use crate::time::{ManualClock, Timestamp};

pub const TRANSCRIPT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum TranscriptError {
    #[error("unsupported transcript version {0}")]
    Version(u32),
    #[error("step {index} is earlier than the previous step")]
    OutOfOrder { index: usize },
    #[error("setup failed: {0}")]
    Setup(#[from] EngineError),
    #[error("setup failed: {0}")]
    Actor(#[from] crate::governance::ActorError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Everything an engine is rebuilt from.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SessionSetup {
    pub config: EngineConfig,
    pub actors: Vec<Actor>,
    pub policy_documents: Vec<Document>,
    pub student_documents: BTreeMap<StudentId, Vec<Document>>,
    pub script: Vec<ScriptEntry>,
    pub start: Timestamp,
}

/// The operations a transcript can drive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "kebab-case")]
pub enum Op {
    Query {
        student: StudentId,
        #[serde(flatten)]
        request: QueryRequest,
    },
    PutItem {
        student: StudentId,
        #[serde(default)]
        id: Option<ItemId>,
        item: NewItem,
    },
    PurgeItem {
        student: StudentId,
        id: ItemId,
    },
    Share {
        artefact: ItemId,
    },
    StartReview {
        case: CaseId,
    },
    Return {
        case: CaseId,
        #[serde(flatten)]
        request: ReturnRequest,
    },
    Acknowledge {
        case: CaseId,
    },
    Close {
        case: CaseId,
    },
    SetConsent {
        student: StudentId,
        scope: ConsentScope,
        state: ConsentState,
    },
    CreateGoal {
        student: StudentId,
        spec: GoalSpec,
    },
    UpdateGoal {
        student: StudentId,
        goal: GoalId,
        change: GoalChange,
    },
    ConfirmSummary {
        student: StudentId,
        summary: SummaryId,
    },
    ReleaseSummary {
        student: StudentId,
        summary: SummaryId,
    },
    PatchDigest {
        student: StudentId,
        #[serde(default)]
        topic: Option<String>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptStep {
    pub at: Timestamp,
    pub actor: ActorId,
    #[serde(flatten)]
    pub op: Op,
    /// Canonical JSON of the result, or of `{"error": code}`.
    #[serde(default)]
    pub output: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionTranscript {
    pub version: u32,
    pub setup: SessionSetup,
    pub steps: Vec<TranscriptStep>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepOutcome {
    pub index: usize,
    pub matches: bool,
    pub expected: String,
    pub actual: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplayReport {
    pub steps: Vec<StepOutcome>,
}

impl ReplayReport {
    pub fn all_match(&self) -> bool {
        self.steps.iter().all(|s| s.matches)
    }

    pub fn mismatches(&self) -> impl Iterator<Item = &StepOutcome> {
        self.steps.iter().filter(|s| !s.matches)
    }
}

fn build(setup: &SessionSetup) -> Result<(Engine, Arc<ManualClock>), TranscriptError> {
    let mut dir = Directory::new();
    for a in setup.actors.iter().filter(|a| a.role != Role::System) {
        dir.register(a.clone())?;
    }
    let clock = Arc::new(ManualClock::new(setup.start));
    let engine = Engine::new(
        setup.config.clone(),
        dir,
        Arc::new(MockBackend::new(setup.script.clone())),
        clock.clone(),
        AuditLog::in_memory(DigestAlgorithm::Sha256),
    )?;
    let system = Actor::system().id;
    if !setup.policy_documents.is_empty() {
        let grs = setup
            .actors
            .iter()
            .find(|a| a.role == Role::Grs)
            .map(|a| a.id.clone())
            .unwrap_or_else(|| system.clone());
        engine.replace_policy_corpus(&grs, setup.policy_documents.clone())?;
    }
    for (student, docs) in &setup.student_documents {
        engine.ingest_student_documents(student, student, docs.clone())?;
    }
    Ok((engine, clock))
}

fn output<T: Serialize>(r: Result<T, EngineError>) -> String {
    let v = match r {
        Ok(v) => serde_json::to_value(v).unwrap_or_else(|e| json!({"error": "internal", "message": e.to_string()})),
        Err(e) => json!({"error": e.code(), "rule": e.rule()}),
    };
    to_canonical_string(&v).expect("values always serialise")
}

fn run(engine: &Engine, actor: &ActorId, op: &Op) -> String {
    match op {
        Op::Query { student, request } => output(engine.query(actor, student, request.clone())),
        Op::PutItem { student, id, item } => output(engine.put_item(actor, student, id.clone(), item.clone())),
        Op::PurgeItem { student, id } => output(engine.purge_item(actor, student, id).map(|()| Value::Null)),
        Op::Share { artefact } => output(engine.share(actor, artefact)),
        Op::StartReview { case } => output(engine.start_review(actor, case)),
        Op::Return { case, request } => output(engine.return_case(actor, case, request.clone())),
        Op::Acknowledge { case } => output(engine.acknowledge(actor, case)),
        Op::Close { case } => output(engine.close_case(actor, case)),
        Op::SetConsent { student, scope, state } => output(engine.set_consent(actor, student, *scope, *state)),
        Op::CreateGoal { student, spec } => output(engine.create_goal(actor, student, spec.clone())),
        Op::UpdateGoal { student, goal, change } => output(engine.update_goal(actor, student, goal, change.clone())),
        Op::ConfirmSummary { student, summary } => output(engine.confirm_summary(actor, student, summary)),
        Op::ReleaseSummary { student, summary } => output(engine.release_summary(actor, student, summary)),
        Op::PatchDigest { student, topic } => output(engine.patch_digest(actor, student, topic.as_deref())),
    }
}

fn check_order(steps: &[TranscriptStep], start: Timestamp) -> Result<(), TranscriptError> {
    let mut last = start;
    for (index, s) in steps.iter().enumerate() {
        if s.at < last {
            return Err(TranscriptError::OutOfOrder { index });
        }
        last = s.at;
    }
    Ok(())
}

impl SessionTranscript {
    /// Runs `steps` against a fresh engine and fills in their outputs.
    pub fn record(setup: SessionSetup, mut steps: Vec<TranscriptStep>) -> Result<Self, TranscriptError> {
        check_order(&steps, setup.start)?;
        let (engine, clock) = build(&setup)?;
        for s in &mut steps {
            clock.set(s.at);
            s.output = run(&engine, &s.actor, &s.op);
        }
        Ok(Self {
            version: TRANSCRIPT_VERSION,
            setup,
            steps,
        })
    }

    pub fn replay(&self) -> Result<ReplayReport, TranscriptError> {
        if self.version != TRANSCRIPT_VERSION {
            return Err(TranscriptError::Version(self.version));
        }
        check_order(&self.steps, self.setup.start)?;
        let (engine, clock) = build(&self.setup)?;
        let steps = self
            .steps
            .iter()
            .enumerate()
            .map(|(index, s)| {
                clock.set(s.at);
                let actual = run(&engine, &s.actor, &s.op);
                StepOutcome {
                    index,
                    matches: actual == s.output,
                    expected: s.output.clone(),
                    actual,
                }
            })
            .collect();
        Ok(ReplayReport { steps })
    }

    pub fn from_json(text: &str) -> Result<Self, TranscriptError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("transcripts always serialise")
    }
}

impl TranscriptStep {
    pub fn new(at: Timestamp, actor: impl Into<ActorId>, op: Op) -> Self {
        Self {
            at,
            actor: actor.into(),
            op,
            output: String::new(),
        }
    }
}
