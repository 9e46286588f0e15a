use std::fmt;

use stancemine_core::annotation::AnnotationError;
use stancemine_core::batch::BatchError;
use stancemine_core::claims::ClaimError;
use stancemine_core::gateway::GatewayError;
use stancemine_core::ingest::IngestError;
use stancemine_core::stance::{EndpointError, StanceError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitKind {
    Validation,
    Backend,
    ParseBudget,
}

impl ExitKind {
    pub fn code(self) -> u8 {
        match self {
            ExitKind::Validation => 2,
            ExitKind::Backend => 3,
            ExitKind::ParseBudget => 4,
        }
    }
}

#[derive(Debug)]
pub struct Failure {
    pub kind: ExitKind,
    pub error: anyhow::Error,
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#}", self.error)
    }
}

impl Failure {
    pub fn new(kind: ExitKind, error: impl Into<anyhow::Error>) -> Self {
        Failure { kind, error: error.into() }
    }

    pub fn validation(error: impl Into<anyhow::Error>) -> Self {
        Self::new(ExitKind::Validation, error)
    }

    /// Prefixes the error with the pipeline stage it came from.
    pub fn in_stage(self, stage: &str) -> Self {
        Failure { kind: self.kind, error: self.error.context(format!("stage {stage} failed")) }
    }
}

pub type Outcome<T> = Result<T, Failure>;

/// Attaches an exit kind to any error.
pub trait OrExit<T> {
    fn or_exit(self, kind: ExitKind) -> Outcome<T>;
    fn invalid(self) -> Outcome<T>;
}

impl<T, E: Into<anyhow::Error>> OrExit<T> for Result<T, E> {
    fn or_exit(self, kind: ExitKind) -> Outcome<T> {
        self.map_err(|e| Failure::new(kind, e))
    }

    fn invalid(self) -> Outcome<T> {
        self.or_exit(ExitKind::Validation)
    }
}

fn batch_kind<E: std::error::Error>(e: &BatchError<E>) -> ExitKind {
    match e {
        BatchError::Aborted { .. } => ExitKind::Backend,
        BatchError::Checkpoint { .. } => ExitKind::Validation,
    }
}

impl From<ClaimError> for Failure {
    fn from(e: ClaimError) -> Self {
        let kind = match &e {
            ClaimError::Batch(b) => batch_kind(b),
            ClaimError::Prompt(_) | ClaimError::EmptyClaimText => ExitKind::Validation,
        };
        Failure::new(kind, e)
    }
}

impl From<StanceError> for Failure {
    fn from(e: StanceError) -> Self {
        let kind = match &e {
            StanceError::Llm(b) => batch_kind(b),
            StanceError::Scorer(b) => batch_kind(b),
            StanceError::Prompt(_) | StanceError::Threshold(_) => ExitKind::Validation,
        };
        Failure::new(kind, e)
    }
}

impl From<IngestError> for Failure {
    fn from(e: IngestError) -> Self {
        let kind = match &e {
            IngestError::Transport { .. } => ExitKind::Backend,
            _ => ExitKind::Validation,
        };
        Failure::new(kind, e)
    }
}

impl From<GatewayError> for Failure {
    fn from(e: GatewayError) -> Self {
        let kind = match &e {
            GatewayError::Config(_) => ExitKind::Validation,
            _ => ExitKind::Backend,
        };
        Failure::new(kind, e)
    }
}

impl From<EndpointError> for Failure {
    fn from(e: EndpointError) -> Self {
        Failure::new(ExitKind::Backend, e)
    }
}

impl From<AnnotationError> for Failure {
    fn from(e: AnnotationError) -> Self {
        Failure::validation(e)
    }
}
