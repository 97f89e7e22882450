use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error: {0}")]
    Parse(String),

    #[error("group mismatch: {0}")]
    GroupMismatch(String),

    #[error("empty set: {0}")]
    EmptySet(&'static str),

    #[error("invalid system: {0}")]
    InvalidSystem(String),

    #[error("not free: {0}")]
    NotFree(String),

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("level too coarse: {0}")]
    LevelTooCoarse(String),

    #[error("not found: {0}")]
    NotFound(String),

    #[error("Følner family exhausted: {0}")]
    FolnerExhausted(String),

    #[error("coverage failure: {0}")]
    CoverageFailure(String),

    #[error("Hall violation: {0}")]
    HallViolation(String),

    #[error("not a partition: {0}")]
    NotPartition(String),

    #[error("verification failed: {0}")]
    Verification(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Inputs that do not meet an operation's preconditions.
    pub fn is_precondition(&self) -> bool {
        matches!(
            self,
            Error::Precondition(_)
                | Error::LevelTooCoarse(_)
                | Error::NotFree(_)
                | Error::NotFound(_)
                | Error::EmptySet(_)
                | Error::NotPartition(_)
                | Error::InvalidSystem(_)
        )
    }

    /// A construction ran but could not establish its claim.
    pub fn is_claim_failure(&self) -> bool {
        matches!(
            self,
            Error::CoverageFailure(_) | Error::HallViolation(_) | Error::FolnerExhausted(_) | Error::Verification(_)
        )
    }
}
