use std::io;

use thiserror::Error;

/// Errors raised anywhere in the simulation and analysis pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Inconsistent or infeasible configuration.
    #[error("configuration error: {0}")]
    Config(String),

    /// Cross-correlation did not produce a significant peak.
    #[error("synchronization failure: {0}")]
    Sync(String),

    /// Phase alignment found no usable correlation.
    #[error("alignment failure: {0}")]
    Alignment(String),

    /// Pilot tone not found above the noise floor.
    #[error("pilot lost: {0}")]
    PilotLost(String),

    /// A covariance matrix or intermediate quantity is unphysical or singular.
    #[error("numerical error: {0}")]
    Numerical(String),

    /// A run aborted inside a named stage.
    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("I/O error: {0}")]
    Io(#[from] io::Error),

    #[error("format error: {0}")]
    Format(String),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }

    /// Wrap an error with the pipeline stage it came from.
    pub fn in_stage(self, stage: &'static str) -> Self {
        match self {
            already @ Error::Stage { .. } => already,
            other => Error::Stage {
                stage,
                source: Box::new(other),
            },
        }
    }

    /// The innermost error, looking through stage wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            other => other,
        }
    }

    /// Process exit code for the command-line front end.
    ///
    /// 2 configuration/domain, 3 synchronization or alignment, 4 numerical,
    /// 5 I/O.
    pub fn exit_code(&self) -> i32 {
        match self.root() {
            Error::Domain(_) | Error::Config(_) => 2,
            Error::Sync(_) | Error::Alignment(_) | Error::PilotLost(_) => 3,
            Error::Numerical(_) => 4,
            Error::Io(_) | Error::Format(_) => 5,
            Error::Stage { .. } => unreachable!("root() never returns a stage wrapper"),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
