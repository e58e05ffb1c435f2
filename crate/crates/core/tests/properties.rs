//! Cross-module invariants as property tests.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use mentorloop_core::context_store::{ItemBody, ItemFilter, ItemKind, NewItem};
use mentorloop_core::engine::QueryRequest;
use mentorloop_core::governance::{
    authorize, Action, Actor, AuditLog, ConsentScope, ConsentState, Decision, DigestAlgorithm, Directory, ResourceClass,
    ResourceRef,
};
use mentorloop_core::ids::{CaseId, PatchId, StudentId};
use mentorloop_core::orchestrator::{
    generate_with_scaling, BackendError, Capability, CorpusRef, EscalationPolicy, GenerateRequest, GenerateResponse,
    GenerationBackend, GenerationBudget, MockBackend, Orchestrator, QueryInput, RetrievalSources, RouteContext,
    RouteKind, ScriptEntry,
};
use mentorloop_core::patch_engine::{
    compile_directives, BehaviourPatch, Directive, ExcludeTarget, PatchScope, QuestioningLevel,
};
use mentorloop_core::retrieval::{index_corpus, Corpus, CorpusClass, Document, PolicyIndexHandle};
use mentorloop_core::supervision::{
    CaseState, GoalMetric, GoalSpec, GoalTarget, ModerationCase, ReleaseRule, SummaryState,
};
use mentorloop_core::tkg::{forecast, Checkpoint, MilestonePlan, TemporalGraph};
use mentorloop_core::triage::{load_shipped, render_report, ReportFormat};
use mentorloop_core::{ActorId, Engine, EngineConfig, ItemId, ManualClock, Timestamp};
use proptest::prelude::*;

fn engine(dir: Directory) -> (Engine, Arc<ManualClock>) {
    let clock = Arc::new(ManualClock::new(Timestamp(1_000)));
    let backend = MockBackend::new(vec![ScriptEntry::new("methods", "Use the methods notes.")]);
    let e = Engine::new(
        EngineConfig::default(),
        dir,
        Arc::new(backend),
        clock.clone(),
        AuditLog::in_memory(DigestAlgorithm::Sha256),
    )
    .unwrap();
    (e, clock)
}

fn two_students() -> (Engine, Arc<ManualClock>) {
    let mut dir = Directory::new();
    dir.register(Actor::student("a")).unwrap();
    dir.register(Actor::student("b")).unwrap();
    dir.register(Actor::supervisor("sup", ["a"])).unwrap();
    dir.register(Actor::grs("grs")).unwrap();
    engine(dir)
}

// ---- governance ----

fn any_action() -> impl Strategy<Value = Action> {
    prop::sample::select(Action::ALL.to_vec())
}

fn any_class() -> impl Strategy<Value = ResourceClass> {
    prop::sample::select(ResourceClass::ALL.to_vec())
}

proptest! {
    #[test]
    fn grs_never_reaches_student_scoped_resources(action in any_action(), class in any_class(), owner in "[a-z]{1,6}") {
        let grs = Actor::grs("grs");
        let d = authorize(&grs, action, &ResourceRef::of_student(class, &StudentId::new(owner)));
        if class.is_student_scoped() {
            prop_assert!(!d.is_allow());
            prop_assert_eq!(d, Decision::Deny("student-context-isolation".into()));
        }
    }

    #[test]
    fn students_only_reach_their_own_workspace(action in any_action(), class in any_class(), owner in "[a-c]") {
        let me = Actor::student("a");
        let d = authorize(&me, action, &ResourceRef::of_student(class, &StudentId::new(owner.clone())));
        if class.is_student_scoped() && owner != "a" {
            prop_assert!(!d.is_allow());
        }
    }
}

#[test]
fn grs_engine_reads_of_student_data_all_fail() {
    let (e, _) = two_students();
    let (grs, a) = (ActorId::new("grs"), StudentId::new("a"));
    e.put_item(&ActorId::new("a"), &a, None, NewItem::new(ItemKind::Document, ItemBody::text("secret")))
        .unwrap();
    assert!(e.get_items(&grs, &a, &ItemFilter::default()).is_err());
    assert!(e.export(&grs, &a).is_err());
    assert!(e.timeline(&grs, &a, e.now()).is_err());
    assert!(e.goals(&grs, &a).is_err());
    assert!(e.summaries(&grs, &a).is_err());
    assert!(e.patch_digest(&grs, &a, None).is_err());
    assert!(e.query(&grs, &a, QueryRequest::text("methods")).is_err());
    assert!(e.practice_items(&grs, &a).is_err());
    assert!(e.checks(&grs, &a).is_err());
    assert!(e.cases_of(&grs, &a).is_err());
}

#[test]
fn fresh_students_have_every_scope_off() {
    let (e, _) = two_students();
    for s in ["a", "b"] {
        let records = e.consent(&ActorId::new(s), &StudentId::new(s)).unwrap();
        assert_eq!(records.len(), ConsentScope::ALL.len());
        assert!(records.iter().all(|r| r.state == ConsentState::Off && r.updated_at.is_none()));
    }
}

// ---- context store isolation under interleavings ----

#[derive(Debug, Clone)]
enum StoreOp {
    Put { actor: usize, target: usize, text: String },
    Purge { actor: usize, target: usize, pick: usize },
    Read { actor: usize, target: usize },
}

fn store_op() -> impl Strategy<Value = StoreOp> {
    prop_oneof![
        (0..2usize, 0..2usize, "[a-z ]{1,20}").prop_map(|(actor, target, text)| StoreOp::Put { actor, target, text }),
        (0..2usize, 0..2usize, any::<usize>()).prop_map(|(actor, target, pick)| StoreOp::Purge { actor, target, pick }),
        (0..2usize, 0..2usize).prop_map(|(actor, target)| StoreOp::Read { actor, target }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn cross_student_calls_never_touch_the_other_store(ops in prop::collection::vec(store_op(), 1..30)) {
        let (e, clock) = two_students();
        let ids = ["a", "b"];
        let mut model: [Vec<(ItemId, String)>; 2] = [Vec::new(), Vec::new()];
        let mut purged: [Vec<(ItemId, String)>; 2] = [Vec::new(), Vec::new()];
        for (n, op) in ops.into_iter().enumerate() {
            clock.advance(10);
            match op {
                StoreOp::Put { actor, target, text } => {
                    let text = format!("MARK{n}X {text}");
                    let r = e.put_item(
                        &ActorId::new(ids[actor]),
                        &StudentId::new(ids[target]),
                        None,
                        NewItem::new(ItemKind::Document, ItemBody::text(text.clone())),
                    );
                    prop_assert_eq!(r.is_ok(), actor == target);
                    if let Ok(item) = r {
                        model[target].push((item.id, text));
                    }
                }
                StoreOp::Purge { actor, target, pick } => {
                    if model[target].is_empty() {
                        continue;
                    }
                    let idx = pick % model[target].len();
                    let r = e.purge_item(&ActorId::new(ids[actor]), &StudentId::new(ids[target]), &model[target][idx].0);
                    prop_assert_eq!(r.is_ok(), actor == target);
                    if r.is_ok() {
                        purged[target].push(model[target].remove(idx));
                    }
                }
                StoreOp::Read { actor, target } => {
                    let r = e.get_items(&ActorId::new(ids[actor]), &StudentId::new(ids[target]), &ItemFilter::default());
                    prop_assert_eq!(r.is_ok(), actor == target);
                }
            }
        }
        for (i, s) in ids.iter().enumerate() {
            let got: BTreeSet<ItemId> = e
                .get_items(&ActorId::new(*s), &StudentId::new(*s), &ItemFilter::default())
                .unwrap()
                .into_iter()
                .map(|it| it.id)
                .collect();
            prop_assert_eq!(got, model[i].iter().map(|m| m.0.clone()).collect::<BTreeSet<_>>());
            let exported = export_text(&e.export(&ActorId::new(*s), &StudentId::new(*s)).unwrap());
            for (id, text) in &purged[i] {
                prop_assert!(e.get_item(&ActorId::new(*s), &StudentId::new(*s), id).is_err());
                let mark = text.split(' ').next().unwrap();
                prop_assert!(!exported.contains(mark), "purged {} still exported", id);
            }
            for (_, text) in &model[i] {
                prop_assert!(exported.contains(text.split(' ').next().unwrap()));
            }
        }
    }
}

fn export_text(bytes: &[u8]) -> String {
    use std::io::Read;
    let mut archive = zip::ZipArchive::new(std::io::Cursor::new(bytes)).unwrap();
    let mut out = String::new();
    for i in 0..archive.len() {
        archive.by_index(i).unwrap().read_to_string(&mut out).unwrap();
    }
    out
}

// ---- retrieval ----

fn doc_strategy() -> impl Strategy<Value = Vec<String>> {
    prop::collection::vec("[A-Za-z]{1,8}( [a-z]{1,8}){0,8}[.!?]( [A-Z][a-z]{1,8}( [a-z]{1,8}){0,6}\\.){0,4}", 1..8)
}

proptest! {
    #[test]
    fn backlinks_reproduce_their_quoted_text(bodies in doc_strategy(), q in "[a-z]{1,8}( [a-z]{1,8}){0,3}") {
        let docs: Vec<Document> = bodies
            .iter()
            .enumerate()
            .map(|(i, b)| Document::new(format!("d{i}"), format!("D{i}"), b.clone()))
            .collect();
        let corpus = Corpus::new("c", CorpusClass::PolicyIndex, docs.clone());
        let index = index_corpus(corpus).unwrap();
        let hits = index.query(&q, 10);
        prop_assert_eq!(&hits, &index.query(&q, 10));
        for h in &hits {
            let d = docs.iter().find(|d| d.id == h.backlink.document_id).unwrap();
            let (s, t) = h.backlink.passage_span;
            prop_assert_eq!(&d.body[s..t], h.backlink.quoted_text.as_str());
            prop_assert_eq!(h.backlink.document_version, d.version);
            prop_assert!(h.backlink.resolves_in(index.corpus()));
        }
    }
}

// ---- temporal graph ----

proptest! {
    #[test]
    fn assertion_times_never_change(ops in prop::collection::vec((0i64..1000, any::<bool>(), 1i64..500), 1..60)) {
        let mut g = TemporalGraph::new();
        let now = Timestamp(10_000);
        let mut asserted = BTreeMap::new();
        for (i, (at, retract, gap)) in ops.into_iter().enumerate() {
            let id = g.assert_fact(format!("s{}", i % 5), "r", format!("o{i}"), Timestamp(at), now).unwrap();
            asserted.insert(id.clone(), Timestamp(at));
            if retract {
                g.retract_fact(&id, Timestamp(at + gap), now).unwrap();
                // a second retraction is refused and changes nothing
                prop_assert!(g.retract_fact(&id, Timestamp(at + gap + 1), now).is_err());
            }
            for f in g.facts() {
                prop_assert_eq!(f.asserted_at, asserted[&f.id]);
            }
        }
    }

    #[test]
    fn completing_a_checkpoint_never_delays_the_forecast(
        gaps in prop::collection::vec(prop::option::of(1i64..100), 1..10),
        pick in any::<usize>(),
        extra in 0i64..100,
    ) {
        let mut t = 0;
        let checkpoints: Vec<Checkpoint> = gaps
            .iter()
            .enumerate()
            .map(|(i, g)| Checkpoint {
                id: format!("c{i}"),
                completed_at: g.map(|g| {
                    t += g;
                    Timestamp(t)
                }),
            })
            .collect();
        let as_of = Timestamp(t + extra + 1);
        let plan = MilestonePlan {
            milestone_id: "m".into(),
            started_at: Timestamp(0),
            due_at: Timestamp(500),
            checkpoints,
        };
        let open: Vec<usize> = (0..plan.checkpoints.len()).filter(|&i| plan.checkpoints[i].completed_at.is_none()).collect();
        prop_assume!(!open.is_empty());
        let j = open[pick % open.len()];
        // completion time must respect list order among completed checkpoints
        let lo = plan.checkpoints[..j].iter().filter_map(|c| c.completed_at).max().unwrap_or(Timestamp(0));
        let hi = plan.checkpoints[j + 1..].iter().filter_map(|c| c.completed_at).min().unwrap_or(as_of);
        let mut after = plan.clone();
        after.checkpoints[j].completed_at = Some(Timestamp((lo.0 + hi.0) / 2));
        let before = forecast(&plan, as_of).unwrap().projected_completion_at;
        let now = forecast(&after, as_of).unwrap().projected_completion_at;
        match (before, now) {
            (Some(b), Some(n)) => prop_assert!(n <= b, "{:?} -> {:?}", b, n),
            (None, _) => {}
            (Some(_), None) => prop_assert!(false, "forecast lost after completing a checkpoint"),
        }
    }
}

// ---- orchestrator ----

fn orchestrator_sources() -> (Arc<mentorloop_core::retrieval::PassageIndex>, PolicyIndexHandle) {
    let student = index_corpus(Corpus::new(
        "s",
        CorpusClass::StudentCorpus(StudentId::new("a")),
        vec![Document::new("notes", "Notes", "Methods notes cover mixed effects. Sampling matters.")],
    ))
    .unwrap();
    let policy = PolicyIndexHandle::new(
        index_corpus(Corpus::new(
            "p",
            CorpusClass::PolicyIndex,
            vec![Document::new("rules", "Rules", "Extension rules need approval. Leave rules differ.")],
        ))
        .unwrap(),
    )
    .unwrap();
    (student, policy)
}

proptest! {
    #[test]
    fn every_query_gets_one_well_formed_route(q in "[ -~]{1,80}", attach in 0..3usize) {
        let o = Orchestrator::new(Arc::new(MockBackend::new(Vec::new())));
        let attachment = [None, Some(Capability::FigureRead), Some(Capability::AudioRead)][attach];
        let ctx = RouteContext { attachment, ..RouteContext::for_student(StudentId::new("a")) };
        prop_assume!(!q.trim().is_empty());
        let r = o.classify(&q, &ctx).unwrap();
        prop_assert!(r.check_invariants().is_ok());
        if r.kind == RouteKind::Policy {
            prop_assert_eq!(r.corpora, BTreeSet::from([CorpusRef::PolicyIndex]));
        }
    }

    #[test]
    fn mock_runs_are_deterministic(q in "[a-z ]{1,40}", seed in any::<u64>()) {
        prop_assume!(!q.trim().is_empty());
        let backend = MockBackend::new(vec![ScriptEntry::new("rules", "Ask the graduate school.")])
            .with_capability(Capability::CodeRun)
            .with_capability(Capability::FigureRead)
            .with_capability(Capability::AudioRead)
            .with_capability(Capability::WellbeingScreen);
        let o = Orchestrator::new(Arc::new(backend));
        let (student, policy) = orchestrator_sources();
        let run = || {
            let route = o.classify(&q, &RouteContext::for_student(StudentId::new("a"))).unwrap();
            let plan = o.planner.plan(&route, &Default::default()).unwrap();
            let input = QueryInput { query: q.clone(), ..QueryInput::default() };
            let r = o.execute(&plan, &input, RetrievalSources { student: Some(&student), policy: &policy }, seed, "t").unwrap();
            serde_json::to_string(&r).unwrap()
        };
        prop_assert_eq!(run(), run());
    }
}

#[derive(Debug)]
struct Counting {
    answers: Vec<String>,
    calls: AtomicUsize,
}

impl GenerationBackend for Counting {
    fn name(&self) -> &str {
        "counting"
    }

    fn capabilities(&self) -> BTreeSet<Capability> {
        BTreeSet::from([Capability::TextGen])
    }

    fn generate(&self, r: &GenerateRequest) -> Result<GenerateResponse, BackendError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        Ok(GenerateResponse {
            text: self.answers[r.seed as usize % self.answers.len()].clone(),
            citations: Vec::new(),
            agreement_hint: None,
        })
    }
}

proptest! {
    #[test]
    fn backend_calls_are_bounded(answers in prop::collection::vec("[a-c]", 1..12), samples in 1u32..6, max in 0u32..5) {
        let b = Counting { answers, calls: AtomicUsize::new(0) };
        let policy = EscalationPolicy::default();
        let budget = GenerationBudget { samples, max_escalations: max, ..GenerationBudget::SINGLE };
        let out = generate_with_scaling(&b, "q", &[], Capability::TextGen, budget, 0, policy).unwrap();
        let calls = b.calls.load(Ordering::SeqCst);
        prop_assert_eq!(calls, out.trace.samples.len());
        prop_assert!(calls <= (samples + max * policy.step) as usize);
    }
}

// ---- patch engine ----

fn directive() -> impl Strategy<Value = Directive> {
    prop_oneof![
        "[a-c]".prop_map(|d| Directive::Exclude(ExcludeTarget::Source(d.into()))),
        "[a-c]".prop_map(|t| Directive::Exclude(ExcludeTarget::Topic(t))),
        "[a-c]".prop_map(Directive::Tone),
        "[a-c]".prop_map(Directive::PreferMethod),
        prop::sample::select(vec![QuestioningLevel::Off, QuestioningLevel::AskFirst, QuestioningLevel::AskAlways])
            .prop_map(Directive::QuestioningMode),
    ]
}

fn patch_set() -> impl Strategy<Value = Vec<BehaviourPatch>> {
    prop::collection::vec(
        (0..2usize, prop::option::of("[xy]"), directive(), 0i64..50, prop::option::of(any::<prop::sample::Index>())),
        0..25,
    )
    .prop_map(|raw| {
        let mut out: Vec<BehaviourPatch> = Vec::new();
        for (i, (student, topic, directive, at, sup)) in raw.into_iter().enumerate() {
            let student_id = StudentId::new(["a", "b"][student]);
            // supersede an earlier, not yet superseded patch of the same student
            let supersedes = sup.and_then(|ix| {
                let cands: Vec<usize> = (0..out.len())
                    .filter(|&j| out[j].student_id == student_id && out[j].superseded_by.is_none())
                    .collect();
                (!cands.is_empty()).then(|| cands[ix.index(cands.len())])
            });
            let id = PatchId::new(format!("p{i}"));
            if let Some(j) = supersedes {
                out[j].superseded_by = Some(id.clone());
            }
            out.push(BehaviourPatch {
                id,
                author_id: ActorId::new("sup"),
                student_id,
                scope: topic.map_or(PatchScope::Global, PatchScope::Topic),
                directive,
                body: String::new(),
                attached_at: Timestamp(at),
                supersedes: supersedes.map(|j| out[j].id.clone()),
                superseded_by: None,
            });
        }
        out
    })
}

proptest! {
    #[test]
    fn compile_partitions_the_matching_set(patches in patch_set(), topic in prop::option::of("[xyz]"), as_of in 0i64..60) {
        let student = StudentId::new("a");
        let as_of = Timestamp(as_of);
        let c = compile_directives(&patches, &student, topic.as_deref(), as_of);
        prop_assert_eq!(&c, &compile_directives(&patches, &student, topic.as_deref(), as_of));

        // oracle: live, in scope, not superseded by a patch attached by as_of
        let matching: Vec<&BehaviourPatch> = patches
            .iter()
            .filter(|p| p.student_id == student && p.attached_at <= as_of)
            .filter(|p| match &p.scope {
                PatchScope::Global => true,
                PatchScope::Topic(t) => topic.as_deref() == Some(t.as_str()),
            })
            .filter(|p| !patches.iter().any(|q| q.supersedes.as_ref() == Some(&p.id) && q.attached_at <= as_of))
            .collect();
        let want: BTreeSet<&PatchId> = matching.iter().map(|p| &p.id).collect();
        let active: BTreeSet<&PatchId> = c.active.iter().map(|a| &a.patch_id).collect();
        let shadowed: BTreeSet<&PatchId> = c.shadowed.iter().map(|s| &s.patch_id).collect();
        prop_assert!(active.is_disjoint(&shadowed));
        prop_assert_eq!(active.union(&shadowed).cloned().collect::<BTreeSet<_>>(), want);

        // one active directive per conflict key, the latest attachment
        let mut latest: BTreeMap<String, (Timestamp, usize)> = BTreeMap::new();
        for p in &matching {
            let pos = patches.iter().position(|q| q.id == p.id).unwrap();
            let e = latest.entry(p.directive.key()).or_insert((p.attached_at, pos));
            if (p.attached_at, pos) > *e {
                *e = (p.attached_at, pos);
            }
        }
        prop_assert_eq!(c.active.len(), latest.len());
        for a in &c.active {
            let (_, pos) = latest[&a.directive.key()];
            prop_assert_eq!(&patches[pos].id, &a.patch_id);
        }
        // never anything of student b
        for id in active.iter().chain(shadowed.iter()) {
            let p = patches.iter().find(|p| &p.id == *id).unwrap();
            prop_assert_eq!(&p.student_id, &student);
        }
    }
}

// ---- supervision ----

#[test]
fn every_reachable_case_history_is_a_prefix_of_the_lifecycle() {
    const ORDER: [CaseState; 6] = [
        CaseState::Draft,
        CaseState::Shared,
        CaseState::UnderReview,
        CaseState::Returned,
        CaseState::Applied,
        CaseState::Closed,
    ];
    let mut traces = 0;
    // every sequence of up to 6 attempted transitions
    for len in 0..=6u32 {
        for code in 0..6usize.pow(len) {
            let mut case = ModerationCase::new(
                CaseId::new("c"),
                ItemId::new("art"),
                StudentId::new("a"),
                BTreeSet::from([ActorId::new("sup")]),
            );
            case.feedback_ref = Some("pu-1".into());
            let mut c = code;
            for step in 0..len {
                let to = ORDER[c % 6];
                c /= 6;
                let before = case.state;
                let ok = case.transition(to, Timestamp(step as i64), &ActorId::new("x")).is_ok();
                assert_eq!(ok, before.next() == Some(to));
                if !ok {
                    assert_eq!(case.state, before);
                }
            }
            let visited = case.states_visited();
            assert_eq!(visited[..], ORDER[..visited.len()]);
            traces += 1;
        }
    }
    assert_eq!(traces, (0..=6).map(|l| 6usize.pow(l)).sum::<usize>());
}

#[test]
fn released_summaries_carry_no_item_bodies() {
    let (e, clock) = two_students();
    let (a, s) = (ActorId::new("a"), StudentId::new("a"));
    e.set_consent(&a, &s, ConsentScope::AutoSendSummary, ConsentState::On).unwrap();
    e.create_goal(
        &a,
        &s,
        GoalSpec {
            title: "Reading".into(),
            metric: GoalMetric::LiteratureReviewedCount,
            target: GoalTarget { value: 2.0, unit: "papers".into() },
            threshold: 1.0,
            release_rule: ReleaseRule::AutoSendOnCross,
        },
    )
    .unwrap();
    for i in 0..2 {
        clock.advance(10);
        let body = format!("PRIVATE-BODY-{i} confidential reading notes");
        e.put_item(&a, &s, None, NewItem::new(ItemKind::Artefact, ItemBody::text(body)).with_tag("literature-reviewed"))
            .unwrap();
    }
    let sid = e.summaries(&a, &s).unwrap()[0].id.clone();
    clock.advance(10);
    let confirmed = e.confirm_summary(&a, &s, &sid).unwrap();
    assert_eq!(confirmed.state, SummaryState::Released);
    let released = e.supervisor_summaries(&ActorId::new("sup"), &ActorId::new("sup")).unwrap();
    assert_eq!(released.len(), 1);
    let v = serde_json::to_value(&released[0]).unwrap();
    let keys: BTreeSet<&str> = v.as_object().unwrap().keys().map(String::as_str).collect();
    assert_eq!(
        keys,
        BTreeSet::from(["id", "student_id", "goal_id", "completion", "narrative", "artefact_links", "released_at"])
    );
    assert!(!v.to_string().contains("PRIVATE-BODY"));
}

// ---- triage ----

#[test]
fn reports_are_byte_identical_across_runs() {
    let records = load_shipped();
    for f in [ReportFormat::Table, ReportFormat::Csv] {
        assert_eq!(render_report(&records, f), render_report(&records.clone(), f));
    }
}
