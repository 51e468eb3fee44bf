use std::fmt;
use std::io;
use std::path::PathBuf;

/// Errors surfaced by the command-line layer. Each maps to one exit code.
#[derive(Debug)]
pub enum CliError {
    /// The configuration file is not valid JSON or has unknown keys.
    Parse { path: PathBuf, line: usize, column: usize, message: String },
    /// A field holds a value that does not make sense.
    Validation { field: String, message: String },
    Io { path: PathBuf, source: io::Error },
    /// The computation ran but failed or did not meet its goal.
    Numerical(String),
}

impl CliError {
    pub fn validation(field: impl Into<String>, message: impl fmt::Display) -> Self {
        CliError::Validation { field: field.into(), message: message.to_string() }
    }

    pub fn numerical(message: impl fmt::Display) -> Self {
        CliError::Numerical(message.to_string())
    }

    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Numerical(_) => 2,
            _ => 1,
        }
    }

    /// Single line of `key=value` pairs for the diagnostic stream.
    pub fn diagnostic(&self) -> String {
        let q = |s: &str| format!("{s:?}");
        match self {
            CliError::Parse { path, line, column, message } => format!(
                "error=parse path={} line={line} column={column} message={}",
                q(&path.display().to_string()),
                q(message)
            ),
            CliError::Validation { field, message } => {
                format!("error=validation field={field} message={}", q(message))
            }
            CliError::Io { path, source } => {
                format!("error=io path={} message={}", q(&path.display().to_string()), q(&source.to_string()))
            }
            CliError::Numerical(message) => format!("error=numerical message={}", q(message)),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Parse { path, line, column, message } => {
                write!(f, "{}:{line}:{column}: {message}", path.display())
            }
            CliError::Validation { field, message } => write!(f, "{field}: {message}"),
            CliError::Io { path, source } => write!(f, "{}: {source}", path.display()),
            CliError::Numerical(m) => f.write_str(m),
        }
    }
}

impl std::error::Error for CliError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            CliError::Io { source, .. } => Some(source),
            _ => None,
        }
    }
}
