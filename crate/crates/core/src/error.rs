use thiserror::Error;

/// Errors raised across the harness.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("range error: {0}")]
    Range(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("unknown preset or key: {0}")]
    Lookup(String),

    #[error("registration error: unknown obstacle id {0:?}")]
    Registration(String),

    #[error("wiring error: {0}")]
    Wiring(String),

    #[error("planner blocked: every candidate path violates clearance")]
    PlannerBlocked,

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("no corresponding points between clouds")]
    EmptyCorrespondence,

    #[error("effect size undefined: pooled variance is zero")]
    UndefinedEffect,

    #[error("config error: {0}")]
    Config(String),

    #[error("startup error: {0}")]
    Startup(String),

    #[error("campaign error: {0}")]
    Campaign(String),

    #[error("I/O error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
