use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A CSV row could not be read. `row` is the 1-based line number in the file.
    #[error("parse error on line {row}: {msg}")]
    Parse { row: u64, msg: String },

    /// A bar parsed but violates an OHLC invariant.
    #[error("invalid bar on line {row}: {msg}")]
    Validation { row: u64, msg: String },

    #[error("dates out of order on line {row}: {date} does not follow {previous}")]
    Ordering {
        row: u64,
        date: String,
        previous: String,
    },

    #[error("series too short: need at least {needed} bars, got {got}")]
    Sizing { needed: usize, got: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("setup error: {0}")]
    Setup(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    /// Process exit status for this error: 1 usage, 2 data/validation, 3 numerical.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) | Error::Config(_) => 1,
            Error::Parse { .. }
            | Error::Validation { .. }
            | Error::Ordering { .. }
            | Error::Sizing { .. }
            | Error::Setup(_)
            | Error::Io(_) => 2,
            Error::Numerical(_) => 3,
        }
    }
}

impl From<csv::Error> for Error {
    fn from(err: csv::Error) -> Self {
        let row = err.position().map(|p| p.line()).unwrap_or(0);
        match err.into_kind() {
            csv::ErrorKind::Io(e) => Error::Io(e),
            other => Error::Parse {
                row,
                msg: format!("{other:?}"),
            },
        }
    }
}
