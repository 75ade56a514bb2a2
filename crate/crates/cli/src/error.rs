use thiserror::Error;

/// Failures surfaced by the command layer, each mapped to a process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),

    #[error("{0}")]
    Abort(String),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Abort(_) => 3,
            CliError::Io { .. } => 1,
        }
    }

    /// Prefixes a validation message with the scenario path and, when the
    /// message names a field, the line where that field's top-level key sits.
    pub fn in_file(self, path: &std::path::Path, text: &str) -> Self {
        match self {
            CliError::Validation(msg) if !msg.starts_with(&path.display().to_string()) => {
                let line = msg
                    .strip_prefix("field `")
                    .and_then(|rest| rest.split(['`', '.', '[']).next())
                    .and_then(|key| {
                        let quoted = format!("\"{key}\"");
                        text.lines().position(|l| l.trim_start().starts_with(&quoted))
                    });
                match line {
                    Some(l) => CliError::Validation(format!("{}:{}: {msg}", path.display(), l + 1)),
                    None => CliError::Validation(format!("{}: {msg}", path.display())),
                }
            }
            other => other,
        }
    }

    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        CliError::Io {
            context: context.into(),
            source,
        }
    }

    /// Maps a library error raised while building or running a scenario.
    pub(crate) fn from_core(field: &str, e: imitation_core::Error) -> Self {
        match e {
            imitation_core::Error::IntegrationAbort { .. } => CliError::Abort(e.to_string()),
            other => CliError::Validation(format!("field `{field}`: {other}")),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
