use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("io error: {0}")]
    Stream(#[from] std::io::Error),

    #[error("line {line}: duplicate arm (trial_id={trial_id}, arm_id={arm_id})")]
    DuplicateArm {
        line: usize,
        trial_id: String,
        arm_id: String,
    },

    #[error("{what}: {message}")]
    Format { what: String, message: String },

    #[error("k={k} is outside the support [{lo}, {hi}]")]
    OutsideSupport { k: u64, lo: u64, hi: u64 },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("no matched pairs could be formed within the caliper")]
    NoMatches,

    #[error("provenance mismatch: {0}")]
    Provenance(String),
}

impl Error {
    pub fn format(what: impl Into<String>, message: impl ToString) -> Self {
        Error::Format {
            what: what.into(),
            message: message.to_string(),
        }
    }

    /// Process exit status: 2 for bad input, 3 for provenance mismatches,
    /// 4 for internal failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. } | Error::DuplicateArm { .. } | Error::Format { .. } | Error::Invalid(_) | Error::NoMatches => 2,
            Error::Provenance(_) => 3,
            Error::Stream(_) | Error::OutsideSupport { .. } => 4,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
