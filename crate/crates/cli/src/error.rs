use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid instance: {0}")]
    Schema(String),
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] distopt::Error),
    #[error("i/o error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl CliError {
    pub fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        CliError::Io { path: path.display().to_string(), source }
    }
}

/// Exit status for a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Ok,
    Degenerate,
}

impl Outcome {
    pub fn code(self) -> i32 {
        match self {
            Outcome::Ok => 0,
            Outcome::Degenerate => 2,
        }
    }

    pub fn worst(self, other: Outcome) -> Outcome {
        if self == Outcome::Degenerate || other == Outcome::Degenerate {
            Outcome::Degenerate
        } else {
            Outcome::Ok
        }
    }
}
