use std::fmt;

use thiserror::Error;

use crate::tree::TreeViolation;

/// Broad failure class, used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Validation,
    Numerical,
    Io,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimension partition tree: {}", DisplayViolations(.0))]
    InvalidTree(Vec<TreeViolation>),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("inadmissible rank tuple: {0}")]
    Inadmissible(String),

    #[error("TB rank of the input does not match the base point: {0}")]
    RankMismatch(String),

    #[error("subspaces do not share a common complement at {0}")]
    CommonComplementFails(String),

    #[error("point is outside the chart neighbourhood: {0}")]
    NotInNeighborhood(String),

    #[error("ill-conditioned system (condition number {condition:.3e} exceeds {limit:.1e}): {context}")]
    IllConditioned {
        condition: f64,
        limit: f64,
        context: String,
    },

    #[error("rank degeneracy at node {node}: relative singular value {sigma:.3e} below {threshold:.1e}")]
    RankDegeneracy {
        node: String,
        sigma: f64,
        threshold: f64,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::InvalidTree(_)
            | Error::Parse { .. }
            | Error::DimensionMismatch(_)
            | Error::InvalidArgument(_)
            | Error::Inadmissible(_)
            | Error::RankMismatch(_) => ErrorKind::Validation,
            Error::CommonComplementFails(_)
            | Error::NotInNeighborhood(_)
            | Error::IllConditioned { .. }
            | Error::RankDegeneracy { .. } => ErrorKind::Numerical,
            Error::Io(_) => ErrorKind::Io,
        }
    }

    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

struct DisplayViolations<'a>(&'a [TreeViolation]);

impl fmt::Display for DisplayViolations<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, v) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str("; ")?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}
