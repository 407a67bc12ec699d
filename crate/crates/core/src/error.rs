use thiserror::Error;

/// Errors produced anywhere in the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParams(String),

    #[error("regime is balanced (lambda_h == lambda_e); no limit constant is defined")]
    BalancedRegime,

    #[error("not defined for this regime: {0}")]
    WrongRegime(String),

    #[error("truncation too small: boundary mass {mass:.3e} exceeds {tolerance:.1e}")]
    TruncationTooSmall { mass: f64, tolerance: f64 },

    #[error(
        "chain is reducible on the truncated state space (state {0} has no exit to lower states)"
    )]
    Reducible(usize),

    #[error("no convergence: {0}")]
    NoConvergence(String),

    #[error("search budget of {0} node expansions exceeded")]
    SearchBudgetExceeded(u64),

    #[error("lemma hypothesis violated: {0}")]
    Hypothesis(String),

    #[error("bracket does not straddle a sign change: {0}")]
    Bracket(String),

    #[error("config error at line {line}: {msg}")]
    Config { line: usize, msg: String },

    #[error("malformed result file at line {line}: {msg}")]
    Malformed { line: usize, msg: String },

    #[error("unknown experiment `{0}`")]
    UnknownExperiment(String),

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. } | Error::UnknownExperiment(_) | Error::InvalidParams(_) => 2,
            Error::Io(_) | Error::Csv(_) | Error::Malformed { .. } => 4,
            _ => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
