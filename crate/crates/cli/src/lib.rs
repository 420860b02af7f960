//! Command-line harness: gauge generation, solves, partition plans,
//! communication schedules, performance model and self-checks.
//!
//! Exit codes: 0 success, 2 configuration or input error, 3 solve did not
//! converge, 4 internal invariant failure.

pub mod commands;
pub mod config;
pub mod oracle;
pub mod record;

pub use config::RunConfig;
pub use record::{Record, SCHEMA_VERSION};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NOT_CONVERGED: i32 = 3;
pub const EXIT_INTERNAL: i32 = 4;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("internal error: {0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Internal(_) => EXIT_INTERNAL,
        }
    }
}

impl From<latdd::Error> for CliError {
    fn from(e: latdd::Error) -> Self {
        use latdd::Error::*;
        match e {
            CoordOutOfRange { .. }
            | Geometry(_)
            | Indivisible { .. }
            | GeometryMismatch(_)
            | InvalidParameter(_)
            | Header(_)
            | Version(_)
            | Truncated { .. }
            | DimensionOverflow
            | TooLarge(_)
            | UnknownConvention(_)
            | Infeasible(_)
            | Io(_) => CliError::Config(e.to_string()),
            DegenerateDraw(_) | HalfOverflow(_) | NonFinite(_) | Schedule(_) | Message(_) | Deadlock(_) => {
                CliError::Internal(e.to_string())
            }
        }
    }
}

/// What a command produced: human-readable text, record lines and the exit
/// code to return.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub text: String,
    pub records: Vec<Record>,
    pub exit: i32,
    /// Record file named by the run configuration; `--record` takes precedence.
    pub record_to: Option<std::path::PathBuf>,
}

impl Outcome {
    pub fn ok(text: String, records: Vec<Record>) -> Self {
        Outcome { text, records, exit: EXIT_OK, record_to: None }
    }
}
