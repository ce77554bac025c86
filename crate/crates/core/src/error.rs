use thiserror::Error;

/// Errors raised by chain construction, operators and the inequality checks.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("chain must have at least 2 states, got {0}")]
    TooFewStates(usize),

    #[error("unknown state label `{0}`")]
    UnknownState(String),

    #[error("duplicate state label `{0}`")]
    DuplicateState(String),

    #[error("negative rate {rate} from `{from}` to `{to}`")]
    NegativeRate { from: String, to: String, rate: f64 },

    #[error("rate graph is not strongly connected")]
    NonIrreducible,

    #[error("detailed balance violated between `{x}` and `{y}` (residual {residual:e})")]
    DetailedBalanceViolated { x: String, y: String, residual: f64 },

    #[error("invalid stationary measure: {0}")]
    InvalidMeasure(String),

    #[error("birth-death rate vanishes inside the range at state {0}")]
    ZeroRateInsideRange(usize),

    #[error("function has length {got}, chain has {expected} states")]
    LengthMismatch { expected: usize, got: usize },

    #[error("input must be strictly positive, found {value} at state {state}")]
    NonPositiveInput { state: String, value: f64 },

    #[error("function vanishes at state {0}")]
    VanishingEntry(String),

    #[error("input is not a probability density: mass {mass}")]
    NonDensity { mass: f64 },

    #[error("state {0} has no neighbours")]
    DegenerateNeighborhood(usize),

    #[error("M1 is unbounded")]
    UnboundedM1,

    #[error("malformed neighbourhood maps: {0}")]
    MalformedMaps(String),

    #[error("quadrature did not converge (error estimate {error_estimate:e})")]
    QuadratureNonConvergent { error_estimate: f64 },

    #[error("integral is divergent")]
    DivergentIntegral,

    #[error("Phi'(r)/r is not integrable at infinity")]
    NonIntegrableTail,

    #[error("Phi(s^2)/s^2 is not integrable")]
    NonIntegrableGrowth,

    #[error("truncation insufficient: neglected tail mass {tail:e}")]
    TruncationInsufficient { tail: f64 },

    #[error("solver did not converge: lower bound {lower}, upper bound {upper}")]
    SolverNotConverged { lower: f64, upper: f64 },

    #[error("bad parameters: {0}")]
    BadParams(String),

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("invalid descriptor `{0}`")]
    InvalidDescriptor(String),

    #[error("invalid chain spec: {0}")]
    InvalidSpec(String),
}

pub type Result<T> = std::result::Result<T, Error>;
