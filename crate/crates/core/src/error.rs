use thiserror::Error;

/// Errors raised by the library. Numeric payloads are reported as `f64`
/// regardless of the scalar type the computation ran in.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("degenerate weights: every log-weight is -inf")]
    DegenerateWeights,

    #[error("invalid weight at index {index}: {value}")]
    InvalidWeight { index: usize, value: f64 },

    #[error("weights do not sum to one: |sum - 1| = {deviation:e}")]
    NotNormalized { deviation: f64 },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("length mismatch ({what}): expected {expected}, got {got}")]
    LengthMismatch { what: &'static str, expected: usize, got: usize },

    #[error("distributions live on different parameter grids")]
    GridMismatch,

    #[error("atom {index} has dimension {got}, expected {expected}")]
    DimensionMismatch { index: usize, expected: usize, got: usize },

    #[error("duplicate atoms at indices {first} and {second}")]
    DuplicateAtom { first: usize, second: usize },

    #[error("index {index} out of range for grid of {len} atoms")]
    AtomOutOfRange { index: usize, len: usize },

    #[error("non-finite loss {value} at atom {atom}{}", datum.map(|d| format!(" (datum {d})")).unwrap_or_default())]
    NonFiniteLoss { atom: usize, datum: Option<usize>, value: f64 },

    #[error("temperature must be finite and > 0, got {0}")]
    InvalidTemperature(f64),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("sample grid weights must be positive; node {index} has {value}")]
    InvalidQuadratureWeight { index: usize, value: f64 },

    #[error("partition function A(theta) is not finite at atom {atom}")]
    NonFinitePartition { atom: usize },

    #[error("likelihood extraction refused: verdict is {verdict}")]
    NotBeliefPosterior { verdict: String },

    #[error("evidence records use different temperatures ({left} vs {right}); their ratio is undefined")]
    TemperatureMismatch { left: f64, right: f64 },

    #[error("score traces are not comparable: {0}")]
    TraceMismatch(String),

    #[error("outcome grid must be sorted in increasing order")]
    UnsortedGrid,

    #[error("outcome {y} is not within half a grid step of any node")]
    OffGrid { y: f64 },

    #[error("step {step}: {source}")]
    AtStep { step: usize, source: Box<Error> },

    #[error("EL infeasible at theta = {theta}")]
    ElInfeasible { theta: String },

    #[error("ET infeasible at theta = {theta}")]
    EtInfeasible { theta: String },

    #[error("every atom of the grid is infeasible")]
    AllInfeasible,

    #[error("matrix is singular")]
    SingularMatrix,

    #[error("need at least {needed} observations, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("loss model provides no {0} oracle")]
    MissingOracle(&'static str),

    #[error("optimizer diverged after {iterations} iterations (objective trace tail: {trace:?})")]
    Diverged { iterations: usize, trace: Vec<f64> },

    #[error("invalid divergence: {0}")]
    InvalidDivergence(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn at_step(step: usize, source: Error) -> Self {
        Error::AtStep { step, source: Box::new(source) }
    }
}
