use thiserror::Error;

use crate::model::JobId;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("invalid instance: {0}")]
    InvalidInstance(String),

    /// A policy asked the engine for something the scheduling model forbids.
    #[error("protocol violation: {0}")]
    ProtocolViolation(String),

    #[error("corrupt trace: {0}")]
    CorruptTrace(String),

    #[error("trace was not produced by {expected} (found {found})")]
    WrongPolicy { expected: String, found: String },

    #[error("instance too large for brute force: {0}")]
    TooLarge(String),

    #[error("certificate infeasible: job {job} on machine {machine}: {detail}")]
    InfeasibleCertificate {
        job: JobId,
        machine: usize,
        detail: String,
    },

    #[error("policy defers rejections; this adversary requires immediate reject (job {0})")]
    NotImmediateReject(JobId),

    #[error("gadget precondition violated: {0}")]
    GadgetPrecondition(String),

    #[error("simulation did not reach quiescence by time {0}")]
    NoQuiescence(String),
}

impl Error {
    /// Stable short code for machine-readable reporting.
    pub fn code(&self) -> &'static str {
        match self {
            Error::InvalidArgument(_) => "invalid-argument",
            Error::Parse(_) => "parse",
            Error::InvalidInstance(_) => "invalid-instance",
            Error::ProtocolViolation(_) => "protocol-violation",
            Error::CorruptTrace(_) => "corrupt-trace",
            Error::WrongPolicy { .. } => "wrong-policy",
            Error::TooLarge(_) => "too-large",
            Error::InfeasibleCertificate { .. } => "infeasible-certificate",
            Error::NotImmediateReject(_) => "not-immediate-reject",
            Error::GadgetPrecondition(_) => "gadget-precondition",
            Error::NoQuiescence(_) => "no-quiescence",
        }
    }
}
