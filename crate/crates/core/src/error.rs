use thiserror::Error;

use crate::drivers::DriverError;
use crate::path::InvalidPath;
use crate::ruledsl::{EvalError, SyntaxError};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("permission denied: {0}")]
    PermissionDenied(String),
    #[error("denied by policy: {0}")]
    Denied(String),
    #[error("bad credentials")]
    BadCredentials,
    #[error("policy evaluation failed: {0}")]
    PolicyFailed(String),

    #[error("name already in use: {0}")]
    DuplicateName(String),
    #[error("path already exists: {0}")]
    Duplicate(String),
    #[error("rule {0:?} already exists")]
    DuplicateRuleName(String),

    #[error("unknown driver {0:?}")]
    UnknownDriver(String),
    #[error("unknown policy enforcement point {0:?}")]
    UnknownPep(String),
    #[error("no such user {0:?}")]
    NoSuchUser(String),
    #[error("no such resource {0:?}")]
    NoSuchResource(String),
    #[error("no such path {0}")]
    NoSuchPath(String),
    #[error("parent collection of {0} does not exist")]
    NoParent(String),
    #[error("no such data object {0}")]
    NoSuchObject(String),
    #[error("no replica of {path} on {resource}")]
    NoSuchReplica { path: String, resource: String },
    #[error("no such rule {0:?}")]
    NoSuchRule(String),
    #[error("no such workflow {0}")]
    NoSuchWorkflow(String),
    #[error("no such run {0}")]
    NoSuchRun(String),

    #[error(transparent)]
    InvalidPath(#[from] InvalidPath),
    #[error("{0}")]
    Syntax(#[from] SyntaxError),
    #[error("malformed predicate: {0}")]
    MalformedPredicate(String),
    #[error("evaluation error: {0}")]
    Eval(#[from] EvalError),
    #[error("invalid request: {0}")]
    Invalid(String),

    #[error("{path} is not a {expected} collection")]
    WrongCollectionKind { path: String, expected: &'static str },
    #[error("resource {resource} is not {expected}-kind")]
    WrongResourceKind { resource: String, expected: &'static str },

    #[error("all replicas of {0} are suspect")]
    AllReplicasSuspect(String),
    #[error("checksum mismatch: expected {expected}, got {actual}")]
    ChecksumMismatch { expected: String, actual: String },
    #[error("driver error: {0}")]
    Driver(#[from] DriverError),
    #[error("fetch failed: {0}")]
    FetchFailed(String),
    #[error("micro-service {name} failed: {detail}")]
    MicroService { name: String, detail: String },
    #[error("no default resource configured")]
    NoDefaultResource,

    #[error("bad stream framing: {0}")]
    BadFraming(String),
    #[error("timestamps decrease at record {0}")]
    TimestampsDecreasing(usize),
    #[error("bad interval [{lo}, {hi})")]
    BadInterval { lo: u64, hi: u64 },
    #[error("{0} is not a stream collection")]
    NotAStreamCollection(String),
    #[error("{0} is not a workflow collection")]
    NotAWorkflowCollection(String),

    #[error("inputs changed since the original run: {}", .0.join(", "))]
    StaleInputs(Vec<String>),
    #[error("bad bindings: {0}")]
    BadBindings(String),
    #[error("workflow input {0} does not exist")]
    MissingInput(String),

    #[error("corrupt journal: {0}")]
    CorruptJournal(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Coarse outcome class, used for exit codes and HTTP statuses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Unauthenticated,
    Denied,
    NotFound,
    Conflict,
    BadRequest,
    Internal,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        use Error::*;
        match self {
            BadCredentials => ErrorClass::Unauthenticated,
            PermissionDenied(_) | Denied(_) => ErrorClass::Denied,
            NoSuchUser(_)
            | NoSuchResource(_)
            | NoSuchPath(_)
            | NoParent(_)
            | NoSuchObject(_)
            | NoSuchReplica { .. }
            | NoSuchRule(_)
            | NoSuchWorkflow(_)
            | NoSuchRun(_)
            | MissingInput(_) => ErrorClass::NotFound,
            DuplicateName(_) | Duplicate(_) | DuplicateRuleName(_) | StaleInputs(_) => ErrorClass::Conflict,
            UnknownDriver(_)
            | UnknownPep(_)
            | InvalidPath(_)
            | Syntax(_)
            | MalformedPredicate(_)
            | Eval(_)
            | Invalid(_)
            | WrongCollectionKind { .. }
            | WrongResourceKind { .. }
            | BadFraming(_)
            | TimestampsDecreasing(_)
            | BadInterval { .. }
            | NotAStreamCollection(_)
            | NotAWorkflowCollection(_)
            | BadBindings(_) => ErrorClass::BadRequest,
            AllReplicasSuspect(_)
            | ChecksumMismatch { .. }
            | Driver(_)
            | FetchFailed(_)
            | MicroService { .. }
            | NoDefaultResource
            | CorruptJournal(_)
            | Io(_)
            | PolicyFailed(_) => ErrorClass::Internal,
        }
    }
}
