use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("graph is disconnected: agent {unreachable} cannot be reached from agent 0")]
    Connectivity { unreachable: usize },

    #[error("invalid edge ({i}, {j}, {w}): {reason}")]
    InvalidEdge {
        i: usize,
        j: usize,
        w: f64,
        reason: &'static str,
    },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("degenerate graph: largest Laplacian eigenvalue is zero")]
    DegenerateGraph,

    #[error("delay {tau} is not below the stability bound {bound}")]
    Stability { tau: f64, bound: f64 },

    #[error("agent {0} has zero steady-state variance")]
    ZeroVariance(usize),

    #[error("conditioning block is singular or ill-conditioned (condition number {condition:e})")]
    SingularConditioning { condition: f64 },

    #[error("agent {agent} {reason}")]
    Index { agent: usize, reason: &'static str },

    #[error("new failure at agent {0} is already determined by the existing failures")]
    DegenerateUpdate(usize),

    #[error("trajectory diverged at step {step} of trial {trial}")]
    Divergence { trial: usize, step: usize },

    #[error("only {accepted} samples accepted (rate {rate:e}); need at least {required}")]
    InsufficientAcceptance {
        accepted: usize,
        required: usize,
        rate: f64,
    },

    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    Config(Vec<String>),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
