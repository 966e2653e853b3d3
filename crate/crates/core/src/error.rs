use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::scenario::Violation;
use crate::solver::SolverError;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid scenario:\n{}", format_violations(.0))]
    Invalid(Vec<Violation>),

    #[error("config parse error: {0}")]
    Parse(String),

    #[error("{context}: {source}")]
    Solver {
        context: &'static str,
        #[source]
        source: SolverError,
    },

    #[error("SCA requires feasible linearization point: {0}")]
    InfeasibleLinearization(String),

    #[error("corrupted plan: {0}")]
    CorruptedPlan(String),

    #[error("fairness undefined: all values are zero")]
    FairnessUndefined,

    #[error("{}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        Error::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub(crate) fn solver(context: &'static str) -> impl FnOnce(SolverError) -> Error {
        move |source| Error::Solver { context, source }
    }
}

fn format_violations(v: &[Violation]) -> String {
    v.iter().map(|e| format!("  - {e}")).collect::<Vec<_>>().join("\n")
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
