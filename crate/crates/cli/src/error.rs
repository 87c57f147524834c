use std::fmt;
use std::path::Path;

use uptick_core::Error as ModelError;

/// Failure of a CLI run, mapped onto the process exit code.
#[derive(Debug, Clone, PartialEq)]
pub enum CliError {
    /// Bad command line (exit 2).
    Usage(String),
    /// A config key failed to parse or validate (exit 2).
    Config { key: String, reason: String },
    /// The model hit a domain error while running (exit 3).
    Domain { period: Option<usize>, reason: String },
    /// Reading or writing a file failed (exit 1).
    Io { path: String, reason: String },
}

impl CliError {
    pub fn config(key: impl Into<String>, reason: impl Into<String>) -> Self {
        CliError::Config {
            key: key.into(),
            reason: reason.into(),
        }
    }

    pub fn io(path: &Path, err: std::io::Error) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            reason: err.to_string(),
        }
    }

    /// Model errors raised while validating a config name their key.
    pub fn from_validation(err: ModelError) -> Self {
        match err.root() {
            ModelError::ParameterDomain { name, bound } => CliError::config(*name, bound.clone()),
            other => CliError::config("config", other.to_string()),
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Config { .. } => 2,
            CliError::Domain { .. } => 3,
            CliError::Io { .. } => 1,
        }
    }
}

impl From<ModelError> for CliError {
    fn from(err: ModelError) -> Self {
        let period = match &err {
            ModelError::AtPeriod { period, .. } => Some(*period),
            _ => None,
        };
        CliError::Domain {
            period,
            reason: err.root().to_string(),
        }
    }
}

fn quoted(s: &str) -> String {
    format!(
        "\"{}\"",
        s.replace('\\', "\\\\").replace('"', "\\\"").replace('\n', " ")
    )
}

/// Single line: `error=<kind> [key=..|period=..|path=..] reason="..."`.
impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(reason) => write!(f, "error=usage reason={}", quoted(reason)),
            CliError::Config { key, reason } => {
                write!(f, "error=config key={key} reason={}", quoted(reason))
            }
            CliError::Domain {
                period: Some(p),
                reason,
            } => {
                write!(f, "error=domain period={p} reason={}", quoted(reason))
            }
            CliError::Domain { period: None, reason } => {
                write!(f, "error=domain reason={}", quoted(reason))
            }
            CliError::Io { path, reason } => {
                write!(f, "error=io path={} reason={}", quoted(path), quoted(reason))
            }
        }
    }
}

impl std::error::Error for CliError {}

pub type CliResult<T> = std::result::Result<T, CliError>;
