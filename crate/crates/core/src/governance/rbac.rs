//! Role-based access control over a static rule table.
//!
//! A decision is a pure function of `(actor, action, resource)`. The table is
//! enumerable ([`RULES`]) so that it can be printed, reviewed and tested
//! exhaustively. Every denial names the rule it enforces.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ids::{ActorId, StudentId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Role {
    Student,
    Supervisor,
    #[serde(rename = "GRS")]
    Grs,
    System,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::Student => "Student",
            Role::Supervisor => "Supervisor",
            Role::Grs => "GRS",
            Role::System => "System",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Actor {
    pub id: ActorId,
    pub role: Role,
    #[serde(default)]
    pub supervisees: BTreeSet<StudentId>,
    /// Cohort key used for aggregate signals (students only).
    #[serde(default)]
    pub cohort: Option<String>,
}

impl Actor {
    pub fn student(id: impl Into<ActorId>) -> Self {
        Self {
            id: id.into(),
            role: Role::Student,
            supervisees: BTreeSet::new(),
            cohort: None,
        }
    }

    pub fn supervisor<I, S>(id: impl Into<ActorId>, supervisees: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<ActorId>,
    {
        Self {
            id: id.into(),
            role: Role::Supervisor,
            supervisees: supervisees.into_iter().map(Into::into).collect(),
            cohort: None,
        }
    }

    pub fn grs(id: impl Into<ActorId>) -> Self {
        Self {
            id: id.into(),
            role: Role::Grs,
            supervisees: BTreeSet::new(),
            cohort: None,
        }
    }

    pub fn system() -> Self {
        Self {
            id: ActorId::new("system"),
            role: Role::System,
            supervisees: BTreeSet::new(),
            cohort: None,
        }
    }

    pub fn with_cohort(mut self, cohort: impl Into<String>) -> Self {
        self.cohort = Some(cohort.into());
        self
    }

    pub fn supervises(&self, student: &StudentId) -> bool {
        self.role == Role::Supervisor && self.supervisees.contains(student)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Action {
    Read,
    Write,
    Purge,
    Query,
    Share,
    Review,
    Release,
    Manage,
    Verify,
}

impl Action {
    pub const ALL: [Action; 9] = [
        Action::Read,
        Action::Write,
        Action::Purge,
        Action::Query,
        Action::Share,
        Action::Review,
        Action::Release,
        Action::Manage,
        Action::Verify,
    ];
}

/// The class of a resource, independent of which student owns it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ResourceClass {
    ContextItem,
    StudentCorpus,
    Assistant,
    Artefact,
    Case,
    Goal,
    Consent,
    Patches,
    Summary,
    Practice,
    CompetenceCheck,
    PolicyIndex,
    Aggregates,
    AuditLog,
    Queue,
}

impl ResourceClass {
    pub const ALL: [ResourceClass; 15] = [
        ResourceClass::ContextItem,
        ResourceClass::StudentCorpus,
        ResourceClass::Assistant,
        ResourceClass::Artefact,
        ResourceClass::Case,
        ResourceClass::Goal,
        ResourceClass::Consent,
        ResourceClass::Patches,
        ResourceClass::Summary,
        ResourceClass::Practice,
        ResourceClass::CompetenceCheck,
        ResourceClass::PolicyIndex,
        ResourceClass::Aggregates,
        ResourceClass::AuditLog,
        ResourceClass::Queue,
    ];

    fn tag(self) -> &'static str {
        match self {
            ResourceClass::ContextItem => "context",
            ResourceClass::StudentCorpus => "corpus",
            ResourceClass::Assistant => "assistant",
            ResourceClass::Artefact => "artefact",
            ResourceClass::Case => "case",
            ResourceClass::Goal => "goal",
            ResourceClass::Consent => "consent",
            ResourceClass::Patches => "patches",
            ResourceClass::Summary => "summary",
            ResourceClass::Practice => "practice",
            ResourceClass::CompetenceCheck => "check",
            ResourceClass::PolicyIndex => "policy",
            ResourceClass::Aggregates => "aggregates",
            ResourceClass::AuditLog => "audit",
            ResourceClass::Queue => "queue",
        }
    }

    fn from_tag(tag: &str) -> Option<Self> {
        ResourceClass::ALL.into_iter().find(|c| c.tag() == tag)
    }

    /// Classes whose instances belong to one student's private workspace.
    pub fn is_student_scoped(self) -> bool {
        !matches!(
            self,
            ResourceClass::PolicyIndex
                | ResourceClass::Aggregates
                | ResourceClass::AuditLog
                | ResourceClass::Queue
        )
    }
}

/// A concrete resource: a class plus its owner where one exists.
///
/// Renders as `class:owner` (or just `class`), which is also the form stored
/// in audit events.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ResourceRef {
    pub class: ResourceClass,
    pub owner: Option<ActorId>,
}

impl ResourceRef {
    pub fn of_student(class: ResourceClass, student: &StudentId) -> Self {
        Self {
            class,
            owner: Some(student.clone()),
        }
    }

    pub fn context(student: &StudentId) -> Self {
        Self::of_student(ResourceClass::ContextItem, student)
    }

    pub fn summary(student: &StudentId) -> Self {
        Self::of_student(ResourceClass::Summary, student)
    }

    pub fn policy() -> Self {
        Self {
            class: ResourceClass::PolicyIndex,
            owner: None,
        }
    }

    pub fn aggregates() -> Self {
        Self {
            class: ResourceClass::Aggregates,
            owner: None,
        }
    }

    pub fn audit_log() -> Self {
        Self {
            class: ResourceClass::AuditLog,
            owner: None,
        }
    }

    pub fn queue(supervisor: &ActorId) -> Self {
        Self {
            class: ResourceClass::Queue,
            owner: Some(supervisor.clone()),
        }
    }
}

impl fmt::Display for ResourceRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.owner {
            Some(owner) => write!(f, "{}:{}", self.class.tag(), owner),
            None => f.write_str(self.class.tag()),
        }
    }
}

impl FromStr for ResourceRef {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (tag, owner) = match s.split_once(':') {
            Some((t, o)) => (t, Some(ActorId::new(o))),
            None => (s, None),
        };
        let class = ResourceClass::from_tag(tag).ok_or_else(|| format!("unknown resource class `{tag}`"))?;
        Ok(Self { class, owner })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "decision", content = "rule")]
pub enum Decision {
    Allow,
    Deny(String),
}

impl Decision {
    pub fn is_allow(&self) -> bool {
        matches!(self, Decision::Allow)
    }
}

/// Which relation between actor and resource owner a grant requires.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Any,
    /// The actor is the owning student.
    Owner,
    /// The owner is one of the actor's supervisees.
    Supervisee,
    /// The resource is the actor's own queue.
    SelfQueue,
}

impl Relation {
    fn rule(self) -> &'static str {
        match self {
            Relation::Any => "any",
            Relation::Owner => "owner-only",
            Relation::Supervisee => "own-students-only",
            Relation::SelfQueue => "own-queue-only",
        }
    }

    fn holds(self, actor: &Actor, owner: Option<&ActorId>) -> bool {
        match self {
            Relation::Any => true,
            Relation::Owner => owner == Some(&actor.id),
            Relation::Supervisee => owner.is_some_and(|o| actor.supervises(o)),
            Relation::SelfQueue => owner == Some(&actor.id),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Grant {
    pub role: Role,
    pub action: Action,
    pub class: ResourceClass,
    pub relation: Relation,
}

const fn g(role: Role, action: Action, class: ResourceClass, relation: Relation) -> Grant {
    Grant {
        role,
        action,
        class,
        relation,
    }
}

use Action as A;
use Relation as Rel;
use ResourceClass as C;
use Role as R;

/// The complete grant table. Anything not listed is denied. The System role
/// is handled separately as a wildcard (`system-internal`).
pub const RULES: &[Grant] = &[
    // Student: full control of the private workspace.
    g(R::Student, A::Read, C::ContextItem, Rel::Owner),
    g(R::Student, A::Write, C::ContextItem, Rel::Owner),
    g(R::Student, A::Purge, C::ContextItem, Rel::Owner),
    g(R::Student, A::Read, C::StudentCorpus, Rel::Owner),
    g(R::Student, A::Write, C::StudentCorpus, Rel::Owner),
    g(R::Student, A::Query, C::Assistant, Rel::Owner),
    g(R::Student, A::Read, C::Artefact, Rel::Owner),
    g(R::Student, A::Write, C::Artefact, Rel::Owner),
    g(R::Student, A::Share, C::Artefact, Rel::Owner),
    g(R::Student, A::Read, C::Case, Rel::Owner),
    g(R::Student, A::Write, C::Case, Rel::Owner),
    g(R::Student, A::Read, C::Goal, Rel::Owner),
    g(R::Student, A::Write, C::Goal, Rel::Owner),
    g(R::Student, A::Read, C::Consent, Rel::Owner),
    g(R::Student, A::Write, C::Consent, Rel::Owner),
    g(R::Student, A::Read, C::Patches, Rel::Owner),
    g(R::Student, A::Read, C::Summary, Rel::Owner),
    g(R::Student, A::Write, C::Summary, Rel::Owner),
    g(R::Student, A::Release, C::Summary, Rel::Owner),
    g(R::Student, A::Read, C::Practice, Rel::Owner),
    g(R::Student, A::Write, C::Practice, Rel::Owner),
    g(R::Student, A::Read, C::CompetenceCheck, Rel::Owner),
    g(R::Student, A::Write, C::CompetenceCheck, Rel::Owner),
    g(R::Student, A::Read, C::PolicyIndex, Rel::Any),
    g(R::Student, A::Query, C::PolicyIndex, Rel::Any),
    g(R::Student, A::Verify, C::AuditLog, Rel::Any),
    // Supervisor: moderation of shared artefacts and released summaries.
    g(R::Supervisor, A::Read, C::Queue, Rel::SelfQueue),
    g(R::Supervisor, A::Read, C::Case, Rel::Supervisee),
    g(R::Supervisor, A::Review, C::Case, Rel::Supervisee),
    g(R::Supervisor, A::Read, C::Artefact, Rel::Supervisee),
    g(R::Supervisor, A::Write, C::Patches, Rel::Supervisee),
    g(R::Supervisor, A::Read, C::Patches, Rel::Supervisee),
    g(R::Supervisor, A::Read, C::Summary, Rel::Supervisee),
    g(R::Supervisor, A::Write, C::CompetenceCheck, Rel::Supervisee),
    g(R::Supervisor, A::Read, C::CompetenceCheck, Rel::Supervisee),
    g(R::Supervisor, A::Read, C::PolicyIndex, Rel::Any),
    g(R::Supervisor, A::Query, C::PolicyIndex, Rel::Any),
    g(R::Supervisor, A::Verify, C::AuditLog, Rel::Any),
    // GRS: policy stewardship and consented aggregates only.
    g(R::Grs, A::Read, C::PolicyIndex, Rel::Any),
    g(R::Grs, A::Query, C::PolicyIndex, Rel::Any),
    g(R::Grs, A::Manage, C::PolicyIndex, Rel::Any),
    g(R::Grs, A::Read, C::Aggregates, Rel::Any),
    g(R::Grs, A::Verify, C::AuditLog, Rel::Any),
];

/// Name of the rule that denies a role with no grant at all for
/// `(action, class)`.
fn ungranted_rule(role: Role, action: Action, class: ResourceClass) -> &'static str {
    match (role, class) {
        (Role::Grs, c) if c.is_student_scoped() => "student-context-isolation",
        (_, ResourceClass::Consent) => "consent-self-only",
        (_, ResourceClass::Summary) => "summary-visibility",
        (_, ResourceClass::Patches) => "patch-authoring-supervisor-only",
        (_, ResourceClass::Case) if action == Action::Review => "review-by-supervisor-only",
        (_, c) if c.is_student_scoped() => "private-workspace",
        (_, ResourceClass::PolicyIndex) => "policy-stewardship-grs-only",
        (_, ResourceClass::Aggregates) => "aggregates-grs-only",
        (_, ResourceClass::Queue) => "queue-supervisor-only",
        (_, ResourceClass::AuditLog) => "audit-read-by-resource",
        _ => "no-grant",
    }
}

/// Decide whether `actor` may perform `action` on `resource`.
pub fn authorize(actor: &Actor, action: Action, resource: &ResourceRef) -> Decision {
    if actor.role == Role::System {
        return Decision::Allow;
    }
    let mut relation_failure = None;
    for grant in RULES
        .iter()
        .filter(|g| g.role == actor.role && g.action == action && g.class == resource.class)
    {
        if grant.relation.holds(actor, resource.owner.as_ref()) {
            return Decision::Allow;
        }
        relation_failure.get_or_insert(grant.relation.rule());
    }
    let rule = relation_failure.unwrap_or_else(|| ungranted_rule(actor.role, action, resource.class));
    Decision::Deny(rule.to_owned())
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ActorError {
    #[error("unknown actor `{0}`")]
    UnknownActor(ActorId),
    #[error("actor `{0}` already registered")]
    Duplicate(ActorId),
    #[error("actor `{0}`: only supervisors may have supervisees")]
    SuperviseesOnNonSupervisor(ActorId),
}

/// Registry of the deployment's actors.
#[derive(Debug, Default, Clone)]
pub struct Directory {
    actors: BTreeMap<ActorId, Actor>,
}

impl Directory {
    pub fn new() -> Self {
        let mut d = Self::default();
        let system = Actor::system();
        d.actors.insert(system.id.clone(), system);
        d
    }

    pub fn register(&mut self, actor: Actor) -> Result<(), ActorError> {
        if actor.role != Role::Supervisor && !actor.supervisees.is_empty() {
            return Err(ActorError::SuperviseesOnNonSupervisor(actor.id));
        }
        if self.actors.contains_key(&actor.id) {
            return Err(ActorError::Duplicate(actor.id));
        }
        self.actors.insert(actor.id.clone(), actor);
        Ok(())
    }

    pub fn get(&self, id: &ActorId) -> Result<&Actor, ActorError> {
        self.actors
            .get(id)
            .ok_or_else(|| ActorError::UnknownActor(id.clone()))
    }

    pub fn authorize(
        &self,
        actor: &ActorId,
        action: Action,
        resource: &ResourceRef,
    ) -> Result<Decision, ActorError> {
        Ok(authorize(self.get(actor)?, action, resource))
    }

    pub fn actors(&self) -> impl Iterator<Item = &Actor> {
        self.actors.values()
    }

    pub fn students(&self) -> impl Iterator<Item = &Actor> {
        self.actors.values().filter(|a| a.role == Role::Student)
    }

    /// Supervisors of `student`, in id order.
    pub fn supervisors_of(&self, student: &StudentId) -> Vec<ActorId> {
        self.actors
            .values()
            .filter(|a| a.supervises(student))
            .map(|a| a.id.clone())
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s1() -> Actor {
        Actor::supervisor("s1", ["a"])
    }

    #[test]
    fn supervisor_reads_own_students_summary() {
        let a = ActorId::new("a");
        assert_eq!(authorize(&s1(), Action::Read, &ResourceRef::summary(&a)), Decision::Allow);
    }

    #[test]
    fn supervisor_denied_other_students_summary() {
        let b = ActorId::new("b");
        assert_eq!(
            authorize(&s1(), Action::Read, &ResourceRef::summary(&b)),
            Decision::Deny("own-students-only".into())
        );
    }

    #[test]
    fn grs_denied_student_context() {
        let a = ActorId::new("a");
        assert_eq!(
            authorize(&Actor::grs("g"), Action::Read, &ResourceRef::context(&a)),
            Decision::Deny("student-context-isolation".into())
        );
    }

    #[test]
    fn student_purges_own_item() {
        let a = Actor::student("a");
        assert!(authorize(&a, Action::Purge, &ResourceRef::context(&a.id)).is_allow());
        let other = ActorId::new("b");
        assert_eq!(
            authorize(&a, Action::Purge, &ResourceRef::context(&other)),
            Decision::Deny("owner-only".into())
        );
    }

    #[test]
    fn supervisor_cannot_set_consent() {
        let a = ActorId::new("a");
        assert_eq!(
            authorize(
                &s1(),
                Action::Write,
                &ResourceRef::of_student(ResourceClass::Consent, &a)
            ),
            Decision::Deny("consent-self-only".into())
        );
    }

    #[test]
    fn every_role_reads_policy() {
        for actor in [Actor::student("a"), s1(), Actor::grs("g")] {
            assert!(authorize(&actor, Action::Query, &ResourceRef::policy()).is_allow());
        }
    }

    #[test]
    fn grs_never_granted_anything_student_scoped() {
        let a = ActorId::new("a");
        let grs = Actor::grs("g");
        for class in ResourceClass::ALL.into_iter().filter(|c| c.is_student_scoped()) {
            for action in Action::ALL {
                let d = authorize(&grs, action, &ResourceRef::of_student(class, &a));
                assert_eq!(d, Decision::Deny("student-context-isolation".into()), "{class:?} {action:?}");
            }
        }
    }

    #[test]
    fn unknown_actor_is_an_error_not_a_denial() {
        let dir = Directory::new();
        let err = dir
            .authorize(&ActorId::new("ghost"), Action::Read, &ResourceRef::policy())
            .unwrap_err();
        assert_eq!(err, ActorError::UnknownActor(ActorId::new("ghost")));
    }

    #[test]
    fn registry_rejects_supervisees_on_students_and_duplicates() {
        let mut dir = Directory::new();
        let mut bad = Actor::student("x");
        bad.supervisees.insert(ActorId::new("y"));
        assert!(matches!(dir.register(bad), Err(ActorError::SuperviseesOnNonSupervisor(_))));
        dir.register(Actor::student("x")).unwrap();
        assert!(matches!(dir.register(Actor::student("x")), Err(ActorError::Duplicate(_))));
    }

    #[test]
    fn resource_ref_round_trips_through_text() {
        let r = ResourceRef::context(&ActorId::new("stu-1"));
        assert_eq!(r.to_string(), "context:stu-1");
        assert_eq!("context:stu-1".parse::<ResourceRef>().unwrap(), r);
        assert_eq!("policy".parse::<ResourceRef>().unwrap(), ResourceRef::policy());
        assert!("nope:x".parse::<ResourceRef>().is_err());
    }
}
