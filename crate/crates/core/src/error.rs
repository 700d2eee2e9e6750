use thiserror::Error;

use crate::taxonomy::AspectId;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TaxonomyError {
    #[error("level {0} is outside 0..=2")]
    LevelOutOfRange(i64),
    #[error("unknown aspect `{0}`")]
    UnknownAspect(String),
    #[error("aspect count must be non-negative, got {0}")]
    NegativeCount(i64),
    #[error("level count must be at least 1, got {0}")]
    InvalidLevelCount(i64),
    #[error("configuration count does not fit the supported range")]
    Overflow,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProfileError {
    #[error("missing aspect {0}")]
    MissingAspect(AspectId),
    #[error("aspect {aspect}: level {value} out of range")]
    LevelOutOfRange { aspect: AspectId, value: i64 },
    #[error("duplicate aspect {0}")]
    DuplicateAspect(AspectId),
    #[error("malformed profile document: {0}")]
    MalformedDocument(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AnalysisError {
    #[error("exemplar set is empty")]
    EmptyExemplarSet,
    #[error("exemplar `{0}` carries no category label")]
    UnlabeledExemplar(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ActivityError {
    #[error("agent roster is empty")]
    EmptyRoster,
    #[error("goal text is empty")]
    EmptyGoal,
    #[error("{kind:?} cannot be recorded during {phase:?}")]
    PhaseMismatch {
        kind: crate::ontology::ActionKind,
        phase: crate::ontology::Phase,
    },
    #[error("DelegateTask requires a receiver")]
    MissingReceiver,
    #[error("task {0} would introduce a dependency cycle")]
    CyclicDependency(String),
    #[error("task {0} depends on itself")]
    SelfDependency(String),
    #[error("unknown task {0}")]
    UnknownTask(String),
    #[error("task {0} is already present")]
    DuplicateTask(String),
    #[error("activity is terminal")]
    Terminal,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BackendError {
    #[error("placeholder `{0}` has no binding")]
    UnboundPlaceholder(String),
    #[error("template placeholders do not match its body: {0}")]
    InvalidTemplate(String),
    #[error("prompt record is already augmented")]
    AlreadyAugmented,
    #[error("request timed out")]
    Timeout,
    #[error("backend answered with HTTP status {0}")]
    HttpStatus(u16),
    #[error("environment variable `{0}` holding the auth token is not set")]
    NoAuthToken(String),
    #[error("backend unavailable after retries: {0}")]
    BackendUnavailable(String),
    #[error("invalid backend configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RegistryError {
    #[error("resource `{0}` is already registered")]
    DuplicateResource(String),
    #[error("resource `{id}`: subkind {subkind} does not belong to kind {kind}")]
    KindMismatch { id: String, kind: String, subkind: String },
    #[error("no resource available for `{0}`")]
    ResourceUnavailable(String),
    #[error("handler failure: {0}")]
    HandlerFailure(String),
    #[error("unknown handler `{0}`")]
    UnknownHandler(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EngineError {
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("decomposition produced no tasks")]
    EmptyDecomposition,
    #[error("pending tasks exist but none has satisfied dependencies")]
    DeadlockedTasks,
    #[error("no task produced a result")]
    NoResults,
    #[error("protocol violation: expected {expected}, got {got}")]
    ProtocolViolation { expected: String, got: String },
    #[error(transparent)]
    Activity(#[from] ActivityError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Registry(#[from] RegistryError),
}
