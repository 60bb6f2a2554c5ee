use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("self-loop on vertex {0}")]
    SelfLoop(usize),
    #[error("vertex index {index} out of range for {n} vertices")]
    IndexOutOfRange { index: usize, n: usize },
    #[error("graph is disconnected")]
    Disconnected,
    #[error("vertex {0} has no incident edge")]
    IsolatedVertex(usize),
    #[error("unknown topology `{0}`")]
    UnknownTopology(String),
    #[error("bad size for {topology}: {reason}")]
    BadSize { topology: String, reason: String },
    #[error("empty vertex subset")]
    EmptySubset,
    #[error("induced subgraph on the given vertices is disconnected")]
    InducedDisconnected,
    #[error("eigenvalue iteration did not converge")]
    EigenSolveFailure,
    #[error("Lipschitz constant must be positive, got {0}")]
    NonPositiveK(f64),
    #[error("signal function violates its assumptions: {0}")]
    AssumptionViolation(String),
    #[error("{value} is not a fixed point (|s(c) - c| = {gap:e})")]
    NotAFixedPoint { value: f64, gap: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("state left the hypercube [-1, 1]^N: component {index} = {value}")]
    OutOfStateSpace { index: usize, value: f64 },
    #[error("invalid integration settings: {0}")]
    InvalidSettings(String),
    #[error("non-finite state at t = {0}")]
    NonFiniteState(f64),
    #[error("initial states are not ordered component-wise (index {0})")]
    OrderPreconditionViolated(usize),
    #[error("hypercube precondition fails: {0}")]
    PreconditionNotChecked(String),
    #[error("state is not an equilibrium (residual {0:e})")]
    NotAnEquilibrium(f64),
    #[error("equilibrium is fully synchronized; NFSE conditions do not apply")]
    NotNfse,
    #[error("signal function is not odd: |s(-x) + s(x)| = {gap:e} at x = {x}")]
    NotOdd { x: f64, gap: f64 },
    #[error("continuation lost branch `{branch}` at K = {k}")]
    BranchLost { branch: String, k: f64 },
    #[error("cluster cohesion rate is not positive (alpha_in = {0})")]
    CohesionNotMet(f64),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_)
            | Error::UnknownTopology(_)
            | Error::BadSize { .. }
            | Error::SelfLoop(_)
            | Error::IndexOutOfRange { .. }
            | Error::Disconnected
            | Error::IsolatedVertex(_)
            | Error::EmptySubset
            | Error::InducedDisconnected
            | Error::NonPositiveK(_)
            | Error::AssumptionViolation(_)
            | Error::NotOdd { .. }
            | Error::InvalidSettings(_)
            | Error::DimensionMismatch { .. }
            | Error::OutOfStateSpace { .. }
            | Error::Json(_) => 2,
            Error::Invariant(_)
            | Error::OrderPreconditionViolated(_)
            | Error::PreconditionNotChecked(_)
            | Error::CohesionNotMet(_) => 4,
            _ => 3,
        }
    }
}
