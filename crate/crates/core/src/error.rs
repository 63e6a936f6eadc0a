use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid domain: {0}")]
    InvalidDomain(String),
    #[error("point lies {depth} inside the boundary, beyond the normal band {band}")]
    QueryTooDeepInside { depth: f64, band: f64 },
    #[error("membership mode does not match the domain kind")]
    ModeDomainMismatch,
    #[error("state dimension does not match the domain")]
    DimensionMismatch,
    #[error("segment duration must be positive, got {0}")]
    NonpositiveDuration(f64),
    #[error("time {t} outside [0, {horizon}]")]
    TimeOutOfRange { t: f64, horizon: f64 },
    #[error("trajectory leaves the domain by {violation:e}")]
    ExitsDomain { violation: f64 },
    #[error("phase times must satisfy 0 < t1 < t2 < T")]
    PhaseOrderViolation,
    #[error("state is not admissible")]
    StateNotAdmissible,
    #[error("entry problem hypotheses violated: {0}")]
    InvariantViolated(String),
    #[error("no closed form for acceleration exponent p = {0}")]
    UnsupportedExponent(f64),
    #[error("no admissible start could be built")]
    NoFeasibleStart,
    #[error("truncation removed every sample point")]
    EmptyTruncation,
    #[error("support sizes differ: {0} vs {1}")]
    UnequalSupportSize(usize, usize),
    #[error("exact transport is limited to {limit} atoms, got {n}")]
    TooManyAtoms { n: usize, limit: usize },
    #[error("exact transport needs uniform weights")]
    NonuniformWeights,
    #[error("agent {agent}: {source}")]
    Agent { agent: usize, source: Box<Error> },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}
