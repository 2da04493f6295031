use std::path::PathBuf;

use serde::Serialize;

/// Failure classes of a command. Each class owns one exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("malformed panel: {0}")]
    Panel(String),
    #[error("{0}")]
    Infeasible(String),
    #[error("{0}")]
    Solver(String),
    #[error("{0}")]
    Input(String),
}

pub type CliResult<T> = Result<T, CliError>;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_PARSE: i32 = 4;
pub const EXIT_PANEL: i32 = 5;
pub const EXIT_INFEASIBLE: i32 = 6;
pub const EXIT_SOLVER: i32 = 7;
pub const EXIT_INPUT: i32 = 8;

/// Shown at the end of `--help`.
pub const EXIT_CODE_HELP: &str = "\
Exit codes:
  0  success
  2  usage or configuration error (bad flag, unreadable config value)
  3  file could not be read or written
  4  CSV or TOML parse error (bad header, unknown column, non-numeric value)
  5  malformed panel (missing period, duplicate row, unknown target unit, non-finite value)
  6  constraints infeasible at every budget (increase --eta-z / --eta-x)
  7  solver did not converge
  8  invalid input or unmet precondition (non-positive reference means for log-eq,
     placebo with fewer than 2 donors, out-of-range parameter)

On failure a machine-readable error.json is written to the --out directory when one was given.";

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Io { .. } => EXIT_IO,
            CliError::Parse { .. } => EXIT_PARSE,
            CliError::Panel(_) => EXIT_PANEL,
            CliError::Infeasible(_) => EXIT_INFEASIBLE,
            CliError::Solver(_) => EXIT_SOLVER,
            CliError::Input(_) => EXIT_INPUT,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Io { .. } => "io",
            CliError::Parse { .. } => "parse",
            CliError::Panel(_) => "malformed_panel",
            CliError::Infeasible(_) => "infeasible",
            CliError::Solver(_) => "solver",
            CliError::Input(_) => "invalid_input",
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        CliError::Parse {
            path: path.into(),
            message: message.into(),
        }
    }

    pub fn record(&self) -> ErrorRecord {
        ErrorRecord {
            kind: self.kind(),
            exit_code: self.exit_code(),
            message: self.to_string(),
        }
    }
}

impl From<panelfusion_core::Error> for CliError {
    fn from(e: panelfusion_core::Error) -> Self {
        use panelfusion_core::Error as E;
        let msg = e.to_string();
        match e {
            E::InvalidPanel(_) => CliError::Panel(msg),
            E::Infeasible(_) => CliError::Infeasible(msg),
            E::NonConvergence(_) => CliError::Solver(msg),
            E::Budget { ref source, .. } => match **source {
                E::Infeasible(_) => CliError::Infeasible(msg),
                E::NonConvergence(_) => CliError::Solver(msg),
                _ => CliError::Input(msg),
            },
            E::Precondition(_) | E::Dimension(_) | E::Domain(_) => CliError::Input(msg),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct ErrorRecord {
    pub kind: &'static str,
    pub exit_code: i32,
    pub message: String,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_are_disjoint() {
        let errors = [
            CliError::Usage(String::new()),
            CliError::io("x", std::io::Error::other("x")),
            CliError::parse("x", ""),
            CliError::Panel(String::new()),
            CliError::Infeasible(String::new()),
            CliError::Solver(String::new()),
            CliError::Input(String::new()),
        ];
        let mut codes: Vec<i32> = errors.iter().map(CliError::exit_code).collect();
        let mut kinds: Vec<&str> = errors.iter().map(CliError::kind).collect();
        codes.sort();
        codes.dedup();
        kinds.sort();
        kinds.dedup();
        assert_eq!(codes.len(), errors.len());
        assert_eq!(kinds.len(), errors.len());
        assert!(!codes.contains(&EXIT_OK) && !codes.contains(&1));
    }

    #[test]
    fn core_errors_map_to_classes() {
        use panelfusion_core::Error as E;
        assert_eq!(CliError::from(E::InvalidPanel("x".into())).exit_code(), EXIT_PANEL);
        assert_eq!(CliError::from(E::Domain("x".into())).exit_code(), EXIT_INPUT);
        assert_eq!(CliError::from(E::Precondition("x".into())).exit_code(), EXIT_INPUT);
    }
}
