use std::fmt;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// What went wrong while reading a Newick string.
#[derive(Debug, Clone, PartialEq)]
pub enum NewickErrorKind {
    UnbalancedParentheses,
    MissingBranchLength,
    NonBinary { children: usize },
    DuplicateLabel(String),
    UnlabeledTip,
    InvalidNumber(String),
    UnexpectedChar(char),
    UnexpectedEnd,
    TrailingInput,
}

impl fmt::Display for NewickErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::UnbalancedParentheses => write!(f, "unbalanced parentheses"),
            Self::MissingBranchLength => write!(f, "missing branch length"),
            Self::NonBinary { children } => {
                write!(f, "non-binary node with {children} children")
            }
            Self::DuplicateLabel(l) => write!(f, "duplicate tip label '{l}'"),
            Self::UnlabeledTip => write!(f, "tip without a label"),
            Self::InvalidNumber(s) => write!(f, "invalid number '{s}'"),
            Self::UnexpectedChar(c) => write!(f, "unexpected character '{c}'"),
            Self::UnexpectedEnd => write!(f, "unexpected end of input"),
            Self::TrailingInput => write!(f, "trailing input after ';'"),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("newick: {kind} at byte {pos}")]
    Newick { pos: usize, kind: NewickErrorKind },

    #[error("invalid tree: {0}")]
    InvalidTree(String),

    #[error("tip dates: {0}")]
    TipDates(String),

    #[error("covariates: {0}")]
    Covariates(String),

    #[error("config line {line}: {msg}")]
    Config { line: usize, msg: String },

    #[error("grid: {0}")]
    Grid(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("factorization failed: {0}")]
    Factorization(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("quadrature did not converge: {0}")]
    Quadrature(String),

    #[error("simulation spec: {0}")]
    Simulation(String),

    #[error("trace: {0}")]
    Trace(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("summary: {0}")]
    Summary(String),

    #[error("{}: {source}", path.display())]
    File {
        path: PathBuf,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Attach the file an error came from.
    pub fn in_file(self, path: impl Into<PathBuf>) -> Self {
        Error::File {
            path: path.into(),
            source: Box::new(self),
        }
    }
}
