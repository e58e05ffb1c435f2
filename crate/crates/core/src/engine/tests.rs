use super::*;
use crate::governance::DigestAlgorithm;
use crate::orchestrator::{MockBackend, ScriptEntry};
use crate::patch_engine::{Directive, ExcludeTarget, QuestioningLevel};
use crate::supervision::GoalTarget;
use crate::time::{ManualClock, MINUTE};

struct Fixture {
    engine: Engine,
    clock: Arc<ManualClock>,
}

fn alice() -> ActorId {
    ActorId::new("alice")
}
fn bob() -> ActorId {
    ActorId::new("bob")
}
fn sup() -> ActorId {
    ActorId::new("sup")
}
fn grs() -> ActorId {
    ActorId::new("grs")
}

fn fixture() -> Fixture {
    let mut dir = Directory::new();
    dir.register(Actor::student("alice")).unwrap();
    dir.register(Actor::student("bob")).unwrap();
    dir.register(Actor::supervisor("sup", ["alice"])).unwrap();
    dir.register(Actor::supervisor("sup2", ["bob"])).unwrap();
    dir.register(Actor::grs("grs")).unwrap();
    let backend = MockBackend::new(vec![ScriptEntry::new("mixed effects", "Use random slopes for repeated measures.")]);
    let clock = Arc::new(ManualClock::new(Timestamp(1_000)));
    let engine = Engine::new(
        EngineConfig::default(),
        dir,
        Arc::new(backend),
        clock.clone(),
        AuditLog::in_memory(DigestAlgorithm::Sha256),
    )
    .unwrap();
    Fixture { engine, clock }
}

fn doc(id: &str, body: &str) -> Document {
    Document::new(id, id, body)
}

impl Fixture {
    fn tick(&self) {
        self.clock.advance(MINUTE);
    }

    fn seed_alice(&self) {
        self.engine
            .ingest_student_documents(
                &alice(),
                &alice(),
                vec![
                    doc("notes", "Mixed effects models handle repeated measures with random slopes."),
                    doc("blog", "Mixed effects models are always overkill for small samples."),
                ],
            )
            .unwrap();
        self.tick();
    }

    fn ask(&self, q: &str) -> QueryReply {
        let r = self.engine.query(&alice(), &alice(), QueryRequest::text(q)).unwrap();
        self.tick();
        r
    }
}

#[test]
fn query_stores_artefact_and_audits_once() {
    let f = fixture();
    f.seed_alice();
    let before = f.engine.audit_len();
    let r = f.ask("explain mixed effects models");
    assert_eq!(f.engine.audit_len(), before + 1);
    assert_eq!(r.response.text, "Use random slopes for repeated measures.");
    assert!(!r.response.backlinks.is_empty());
    let item = f.engine.get_item(&alice(), &alice(), &r.artefact_id).unwrap();
    assert_eq!(item.kind, ItemKind::Artefact);
    assert!(item.tags.contains("route:discipline"));
    let ev = f.engine.audit_events(&alice()).unwrap().pop().unwrap();
    assert_eq!(ev.action, "assistant.query");
    assert!(!ev.payload.to_string().contains("random slopes"));
    assert_eq!(f.engine.audit_verify(&alice()).unwrap(), ChainStatus::Valid);
}

#[test]
fn failed_or_denied_calls_leave_no_trace() {
    let f = fixture();
    f.seed_alice();
    let n = f.engine.audit_len();
    assert!(matches!(
        f.engine.get_items(&grs(), &alice(), &ItemFilter::default()),
        Err(EngineError::Denied { .. })
    ));
    assert!(f.engine.query(&bob(), &alice(), QueryRequest::text("hi")).is_err());
    assert!(f.engine.share(&alice(), &ItemId::new("notes")).is_err());
    assert!(f.engine.purge_item(&alice(), &alice(), &ItemId::new("nope")).is_err());
    assert!(f.engine.replace_policy_corpus(&alice(), vec![]).is_err());
    assert_eq!(f.engine.audit_len(), n);
    let unknown = f.engine.get_items(&ActorId::new("mallory"), &alice(), &ItemFilter::default());
    assert_eq!(unknown.unwrap_err().class(), ErrorClass::Unauthenticated);
}

#[test]
fn grs_and_foreign_supervisors_are_isolated() {
    let f = fixture();
    f.seed_alice();
    let err = f.engine.get_items(&grs(), &alice(), &ItemFilter::default()).unwrap_err();
    assert_eq!(err.class(), ErrorClass::Forbidden);
    assert!(err.rule().is_some());
    assert!(f.engine.get_items(&ActorId::new("sup2"), &alice(), &ItemFilter::default()).is_err());
    assert!(f.engine.queue(&sup(), &ActorId::new("sup2")).is_err());
    // the GRS sees audit events only for resources it may read
    let visible = f.engine.audit_events(&grs()).unwrap();
    assert!(visible.iter().all(|e| !e.resource_ref.contains("alice")));
    assert!(!f.engine.audit_events(&alice()).unwrap().is_empty());
}

#[test]
fn purged_document_is_never_cited_again() {
    let f = fixture();
    f.seed_alice();
    let r = f.ask("explain mixed effects models");
    assert!(r.response.backlinks.iter().any(|b| b.document_id.as_str() == "blog"));
    f.engine.purge_item(&alice(), &alice(), &ItemId::new("blog")).unwrap();
    f.tick();
    let r = f.ask("explain mixed effects models");
    assert!(r.response.backlinks.iter().all(|b| b.document_id.as_str() != "blog"));
    let log = f.engine.audit_export(&Actor::system().id).unwrap();
    assert!(!log.contains("overkill"));
}

#[test]
fn moderation_loop_attaches_patch_that_shapes_next_answer() {
    let f = fixture();
    f.seed_alice();
    let r = f.ask("explain mixed effects models");
    let case = f.engine.share(&alice(), &r.artefact_id).unwrap();
    f.tick();
    assert!(matches!(
        f.engine.share(&alice(), &r.artefact_id).unwrap_err(),
        EngineError::Supervision(SupervisionError::CaseOpen(_))
    ));
    let q = f.engine.queue(&sup(), &sup()).unwrap();
    assert_eq!(q.len(), 1);
    assert!(q[0].artefact.is_some());
    // returning before review starts is illegal
    let early = ReturnRequest {
        feedback: "x".into(),
        patch: None,
    };
    assert_eq!(f.engine.return_case(&sup(), &case.id, early).unwrap_err().class(), ErrorClass::Conflict);
    f.engine.start_review(&sup(), &case.id).unwrap();
    f.tick();
    let out = f
        .engine
        .return_case(
            &sup(),
            &case.id,
            ReturnRequest {
                feedback: "Do not rely on the blog.".into(),
                patch: Some(PatchDraft::global(Directive::Exclude(ExcludeTarget::Source("blog".into())))),
            },
        )
        .unwrap();
    f.tick();
    assert_eq!(out.case.state, CaseState::Returned);
    assert_eq!(out.update.patch_id, out.patch.as_ref().map(|p| p.id.clone()));
    let digest = f.engine.patch_digest(&alice(), &alice(), None).unwrap();
    assert_eq!(digest.patches.len(), 1);
    assert_eq!(digest.updates.len(), 1);

    let again = f.ask("explain mixed effects models");
    assert!(again.response.backlinks.iter().all(|b| b.document_id.as_str() != "blog"));
    assert_eq!(again.response.trace.active_patches, vec![out.patch.unwrap().id]);

    let applied = f.engine.acknowledge(&alice(), &case.id).unwrap();
    assert_eq!(applied.state, CaseState::Applied);
    let item = f.engine.get_item(&alice(), &alice(), &r.artefact_id).unwrap();
    assert!(item.tags.contains(TAG_MODERATED));
    f.tick();
    let closed = f.engine.close_case(&alice(), &case.id).unwrap();
    assert_eq!(closed.states_visited().len(), 6);
    assert!(f.engine.queue(&sup(), &sup()).unwrap().is_empty());
    // the artefact's state history is queryable on the timeline
    let facts = f.engine.timeline(&alice(), &alice(), f.engine.now()).unwrap();
    assert!(facts
        .iter()
        .any(|t| t.subject == r.artefact_id.as_str() && t.relation == "artefact-state" && t.object == "Closed"));
}

fn lit_goal(rule: ReleaseRule) -> GoalSpec {
    GoalSpec {
        title: "Literature review".into(),
        metric: GoalMetric::LiteratureReviewedCount,
        target: GoalTarget {
            value: 4.0,
            unit: "papers".into(),
        },
        threshold: 0.5,
        release_rule: rule,
    }
}

fn reviewed(f: &Fixture, n: usize) {
    for i in 0..n {
        let item = NewItem::new(ItemKind::Artefact, ItemBody::text(format!("paper {i} notes"))).with_tag("literature-reviewed");
        f.engine.put_item(&alice(), &alice(), None, item).unwrap();
        f.tick();
    }
}

#[test]
fn crossing_prepares_summary_that_waits_for_consent() {
    let f = fixture();
    f.engine.create_goal(&alice(), &alice(), lit_goal(ReleaseRule::ManualOnly)).unwrap();
    reviewed(&f, 1);
    assert!(f.engine.summaries(&alice(), &alice()).unwrap().is_empty());
    reviewed(&f, 1);
    let sums = f.engine.summaries(&alice(), &alice()).unwrap();
    assert_eq!(sums.len(), 1);
    assert_eq!(sums[0].state, SummaryState::Curation);
    assert_eq!(sums[0].artefact_links.len(), 2);
    // no second summary while staying above the threshold
    reviewed(&f, 1);
    assert_eq!(f.engine.summaries(&alice(), &alice()).unwrap().len(), 1);

    let id = sums[0].id.clone();
    f.engine.curate_summary(&alice(), &alice(), &id, Some("Two papers done.".into()), None).unwrap();
    f.engine.confirm_summary(&alice(), &alice(), &id).unwrap();
    let err = f.engine.release_summary(&alice(), &alice(), &id).unwrap_err();
    assert_eq!(err.rule(), Some("consent-required"));
    assert!(f.engine.supervisor_summaries(&sup(), &sup()).unwrap().is_empty());
    assert!(f.engine.summaries(&sup(), &alice()).is_err());

    f.engine
        .set_consent(&alice(), &alice(), ConsentScope::AutoSendSummary, ConsentState::On)
        .unwrap();
    f.engine.release_summary(&alice(), &alice(), &id).unwrap();
    let feed = f.engine.supervisor_summaries(&sup(), &sup()).unwrap();
    assert_eq!(feed.len(), 1);
    assert_eq!(feed[0].narrative, "Two papers done.");
    assert!(f.engine.supervisor_summaries(&ActorId::new("sup2"), &ActorId::new("sup2")).unwrap().is_empty());
}

#[test]
fn auto_send_releases_on_confirm_only_with_consent() {
    let f = fixture();
    f.engine.create_goal(&alice(), &alice(), lit_goal(ReleaseRule::AutoSendOnCross)).unwrap();
    reviewed(&f, 2);
    let id = f.engine.summaries(&alice(), &alice()).unwrap()[0].id.clone();
    let s = f.engine.confirm_summary(&alice(), &alice(), &id).unwrap();
    assert_eq!(s.state, SummaryState::Confirmed);

    let f = fixture();
    f.engine
        .set_consent(&alice(), &alice(), ConsentScope::AutoSendSummary, ConsentState::On)
        .unwrap();
    f.engine.create_goal(&alice(), &alice(), lit_goal(ReleaseRule::AutoSendOnCross)).unwrap();
    reviewed(&f, 2);
    let id = f.engine.summaries(&alice(), &alice()).unwrap()[0].id.clone();
    let s = f.engine.confirm_summary(&alice(), &alice(), &id).unwrap();
    assert_eq!(s.state, SummaryState::Released);
    assert_eq!(s.released_to, vec![sup()]);
}

#[test]
fn lowering_threshold_can_cross() {
    let f = fixture();
    let g = f.engine.create_goal(&alice(), &alice(), lit_goal(ReleaseRule::ManualOnly)).unwrap();
    reviewed(&f, 1);
    let change = GoalChange {
        threshold: Some(0.25),
        ..GoalChange::default()
    };
    let st = f.engine.update_goal(&alice(), &alice(), &g.goal.id, change).unwrap();
    assert!((st.completion - 0.25).abs() < 1e-12);
    assert_eq!(st.goal.edits.len(), 1);
    assert_eq!(f.engine.summaries(&alice(), &alice()).unwrap().len(), 1);
    let ev = f.engine.audit_events(&alice()).unwrap().pop().unwrap();
    assert_eq!(ev.action, "goal.update");
    assert_eq!(ev.payload["edits"][0]["old"], json!(0.5));
}

#[test]
fn auto_confirm_sweep_is_opt_in() {
    let f = fixture();
    f.engine.create_goal(&alice(), &alice(), lit_goal(ReleaseRule::ManualOnly)).unwrap();
    reviewed(&f, 2);
    f.clock.advance(DAY * 30);
    assert!(f.engine.sweep_auto_confirm().unwrap().is_empty());

    let mut f2 = fixture();
    f2.engine.config.auto_confirm_after = Some(DAY);
    f2.engine.create_goal(&alice(), &alice(), lit_goal(ReleaseRule::ManualOnly)).unwrap();
    reviewed(&f2, 2);
    assert!(f2.engine.sweep_auto_confirm().unwrap().is_empty());
    f2.clock.advance(DAY);
    assert_eq!(f2.engine.sweep_auto_confirm().unwrap().len(), 1);
    assert_eq!(f2.engine.summaries(&alice(), &alice()).unwrap()[0].state, SummaryState::Confirmed);
}

#[test]
fn aggregates_respect_consent_and_k_min() {
    let mut dir = Directory::new();
    for i in 0..6 {
        dir.register(Actor::student(format!("s{i}")).with_cohort("2024")).unwrap();
    }
    dir.register(Actor::grs("grs")).unwrap();
    let clock = Arc::new(ManualClock::new(Timestamp(0)));
    let engine = Engine::new(
        EngineConfig::default(),
        dir,
        Arc::new(MockBackend::new(vec![])),
        clock.clone(),
        AuditLog::in_memory(DigestAlgorithm::Sha256),
    )
    .unwrap();
    for i in 0..6 {
        let s = ActorId::new(format!("s{i}"));
        engine.create_goal(&s, &s, lit_goal(ReleaseRule::ManualOnly)).unwrap();
    }
    assert!(engine.aggregates(&grs()).unwrap().is_empty());
    for i in 0..5 {
        let s = ActorId::new(format!("s{i}"));
        engine.set_consent(&s, &s, ConsentScope::AggregateSignals, ConsentState::On).unwrap();
    }
    let a = engine.aggregates(&grs()).unwrap();
    assert_eq!(a.len(), 1);
    assert_eq!(a[0].group_size, 5);
    assert!(engine.aggregates(&ActorId::new("s0")).is_err());
}

#[test]
fn ask_first_turns_next_message_into_clarification() {
    let f = fixture();
    f.seed_alice();
    let r = f.ask("explain mixed effects models");
    let case = f.engine.share(&alice(), &r.artefact_id).unwrap();
    f.engine.start_review(&sup(), &case.id).unwrap();
    f.engine
        .return_case(
            &sup(),
            &case.id,
            ReturnRequest {
                feedback: "Ask before answering.".into(),
                patch: Some(PatchDraft::global(Directive::QuestioningMode(QuestioningLevel::AskFirst))),
            },
        )
        .unwrap();
    f.tick();
    let first = f.ask("explain mixed effects models");
    assert!(first.response.awaiting_reply);
    let second = f.ask("it is for chapter three");
    assert!(!second.response.awaiting_reply);
    assert!(!second.response.backlinks.is_empty());
    let turns = f.engine.read_student(&alice(), |st| Ok(st.store.turns().len())).unwrap();
    assert_eq!(turns, 6);
}

#[test]
fn policy_versions_and_diff() {
    let f = fixture();
    let v = f
        .engine
        .replace_policy_corpus(&grs(), vec![doc("leave", "Leave entitlement.\nannual-leave: 20 days")])
        .unwrap();
    assert_eq!(v, 2);
    let mut d = doc("leave", "Leave entitlement.\nannual-leave: 25 days");
    d.version = 1;
    let stored = f.engine.put_policy_document(&grs(), d).unwrap();
    assert_eq!(stored.version, 2);
    assert_eq!(f.engine.policy(&alice()).unwrap().version, 3);
    assert!(!f.engine.policy_diff(&grs(), 2, 3).unwrap().is_empty());
    assert!(f.engine.policy_diff(&grs(), 2, 9).is_err());
    assert!(f.engine.put_policy_document(&alice(), doc("x", "y")).is_err());
    let hits = f.engine.policy_query(&alice(), "annual leave", 3).unwrap();
    assert_eq!(hits[0].backlink.document_id.as_str(), "leave");
    f.engine.remove_policy_document(&grs(), &DocumentId::new("leave")).unwrap();
    assert!(f.engine.policy(&grs()).unwrap().documents.is_empty());
}

#[test]
fn practice_and_checks() {
    let f = fixture();
    let p = f.engine.create_practice(&alice(), &alice(), "Define a random slope.".into(), None).unwrap();
    assert_eq!(f.engine.practice_due(&alice(), &alice(), None).unwrap().len(), 1);
    f.tick();
    let p = f.engine.review_practice(&alice(), &alice(), &p.id, true).unwrap();
    assert_eq!(p.interval_index, 1);
    assert!(f.engine.practice_due(&alice(), &alice(), None).unwrap().is_empty());
    f.clock.advance(DAY * 3);
    assert_eq!(f.engine.practice_due(&alice(), &alice(), None).unwrap().len(), 1);

    let art = f
        .engine
        .put_item(&alice(), &alice(), None, NewItem::new(ItemKind::Artefact, ItemBody::text("Analysis draft")))
        .unwrap();
    assert!(f.engine.start_check(&sup(), &art.id, vec![]).is_err());
    let s = f
        .engine
        .start_check(&sup(), &art.id, vec!["Why this model?".into(), "What would change it?".into()])
        .unwrap();
    assert!(f.engine.submit_check(&sup(), &alice(), &s.id, vec![]).is_err());
    let t = f
        .engine
        .submit_check(&alice(), &alice(), &s.id, vec!["Repeated measures.".into(), "More data.".into()])
        .unwrap();
    assert!(t.tags.contains(TAG_LOW_SUPPORT_CHECK));
    assert!(f.engine.submit_check(&alice(), &alice(), &s.id, vec![]).is_err());
}

#[test]
fn register_actor_is_system_only_and_audited() {
    let f = fixture();
    assert!(f.engine.register_actor(&grs(), Actor::student("carol")).is_err());
    let n = f.engine.audit_len();
    f.engine.register_actor(&Actor::system().id, Actor::student("carol")).unwrap();
    assert_eq!(f.engine.audit_len(), n + 1);
    let carol = ActorId::new("carol");
    f.engine
        .put_item(&carol, &carol, None, NewItem::new(ItemKind::Artefact, ItemBody::text("hello")))
        .unwrap();
}

#[test]
fn export_is_a_zip() {
    let f = fixture();
    f.seed_alice();
    let bytes = f.engine.export(&alice(), &alice()).unwrap();
    assert_eq!(&bytes[..2], b"PK");
    assert!(f.engine.export(&sup(), &alice()).is_err());
}
