use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("vertex ({x}, {y}) is not conserving: in-degree {ins} != out-degree {outs}")]
    NonConserving {
        x: usize,
        y: usize,
        ins: u8,
        outs: u8,
    },

    #[error("flux is not uniform: {0}")]
    FluxNotUniform(String),

    #[error("value out of range: {0}")]
    OutOfRange(String),

    #[error(
        "flux (k1={k1}, k2={k2}) on a {m}x{n} torus is outside 1 <= k1 <= N-1, 1 <= k2 <= M-1; \
         there the dynamics degenerates to a one-dimensional exclusion process (ASEP)"
    )]
    FluxOutOfRange {
        m: usize,
        n: usize,
        k1: usize,
        k2: usize,
    },

    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },

    #[error("weight {name} = {value} is not strictly positive")]
    NonPositiveWeight { name: &'static str, value: f64 },

    #[error("degenerate denominator 1 - u/sqrt(q) = 0")]
    DegenerateDenominator,

    #[error("({x}, {y}) is not a {dir} trigger of this state")]
    NotATrigger { x: usize, y: usize, dir: String },

    #[error("column scan from ({x}, {y}) wrapped around without finding a terminal vertex")]
    ScanDiverged { x: usize, y: usize },

    #[error("move does not match the state: {0}")]
    StaleMove(String),

    #[error("too large: {0}")]
    TooLarge(String),

    #[error("state space is empty")]
    EmptySpace,

    #[error("generator target left the state space from state index {from}")]
    ClosureViolation { from: usize },

    #[error("flip image of state index {index} is not in the state space")]
    MissingFlipImage { index: usize },

    #[error("free-fermion defect {defect} exceeds tolerance {tolerance}")]
    DefectNonzero { defect: f64, tolerance: f64 },

    #[error("no triggers: the chain is absorbed")]
    Absorbed,

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
