use thiserror::Error;

/// Errors raised by the numerical stages.
///
/// Each variant names the contract that was violated so that the scenario
/// runner can surface the failing stage without extra bookkeeping.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid configuration at {path}: {message}")]
    Config { path: String, message: String },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("self-energy evaluated on the branch cut at z = {re} + {im}i on the first sheet")]
    BranchCut { re: f64, im: f64 },

    #[error("Newton iteration did not converge after {iterations} steps (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("catalogue has no decaying pole (unitary limit)")]
    NoRelaxation,

    #[error("Fock cutoff too small: truncated norm deficit {deficit:e}")]
    Truncation { deficit: f64 },

    #[error("underdetermined fit: {samples} samples for {unknowns} unknowns")]
    Underdetermined { samples: usize, unknowns: usize },

    #[error("mode weights sum to zero")]
    DegenerateWeights,

    #[error("observable set is not exhaustive: rank {rank} < {required}")]
    NotExhaustive { rank: usize, required: usize },

    #[error("boundary mass {mass:e} exceeds {limit:e}: grid too small for the state")]
    BoundaryMass { mass: f64, limit: f64 },

    #[error("spectral coefficients not decaying (tail ratio {ratio:e})")]
    NotSmooth { ratio: f64 },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("empty domain")]
    EmptyDomain,

    #[error("unsupported geometry: {0}")]
    UnsupportedGeometry(String),

    #[error("trajectory left the grid at t = {time}")]
    LeftGrid { time: f64 },

    #[error("empty input: {0}")]
    Empty(String),

    #[error("i/o failure at {path}: {message}")]
    Io { path: String, message: String },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
