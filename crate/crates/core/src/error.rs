use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid node label {0}: labels start at 1")]
    InvalidNode(u64),

    #[error("node {0} is the root and has no mother")]
    NoMother(u64),

    #[error("ancestor depth {depth} exceeds generation {generation} of node {node}")]
    AncestorDepth { node: u64, depth: u32, generation: u32 },

    #[error("generation {0} exceeds the supported maximum of {max}", max = crate::tree::MAX_GENERATION)]
    TreeTooLarge(u32),

    #[error("invalid tree shape: {0}")]
    InvalidShape(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("model is not contracting: beta = {beta} (>= 1) under the {norm} norm")]
    Unstable { beta: f64, norm: &'static str },

    #[error("invalid noise model: {0}")]
    InvalidNoise(String),

    #[error("noise calibration failed: {0}")]
    Calibration(String),

    #[error("invalid initial state: {0}")]
    InvalidInit(String),

    #[error("singular design: condition estimate {cond:e} exceeds {limit:e}")]
    SingularDesign { cond: f64, limit: f64 },

    #[error("tree carries no recorded noise")]
    NoiseNotRecorded,

    #[error("fixed-point iteration did not converge after {iterations} steps (last step {last_step:e})")]
    NonConvergence { iterations: usize, last_step: f64 },

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty sample")]
    EmptySamples,

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
