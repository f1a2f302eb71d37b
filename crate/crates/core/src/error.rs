use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate rotation: {0}")]
    DegenerateRotation(String),

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("insufficient data: need at least {needed}, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("no consensus: {0}")]
    NoConsensus(String),

    #[error("ambiguous pose: candidates {candidates:?} tied with {support} positive-depth points")]
    AmbiguousPose { candidates: Vec<usize>, support: usize },

    #[error("training diverged at epoch {epoch} (last finite epoch: {last_finite_epoch:?})")]
    TrainingDiverged {
        epoch: usize,
        last_finite_epoch: Option<usize>,
    },

    #[error("{}:{line}: {msg}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("files not found: {}", display_paths(.0))]
    NotFound(Vec<PathBuf>),

    #[error("{}:{line}: data integrity: {msg}", path.display())]
    DataIntegrity {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("scene too sparse: {mean_visible:.1} visible points per frame on average (need 50)")]
    SceneTooSparse { mean_visible: f64 },

    #[error("degenerate run: {skipped} of {total} frame pairs skipped")]
    RunDegenerate { skipped: usize, total: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn display_paths(paths: &[PathBuf]) -> String {
    paths
        .iter()
        .map(|p| p.display().to_string())
        .collect::<Vec<_>>()
        .join(", ")
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::RunDegenerate { .. } | Error::TrainingDiverged { .. } => 3,
            Error::Io(_) => 1,
            _ => 2,
        }
    }
}
