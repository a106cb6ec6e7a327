use std::fmt;

/// Process exit status: 2 for bad input, 1 for a run that aborted.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExitKind {
    Input,
    Abort,
}

impl ExitKind {
    pub fn code(self) -> u8 {
        match self {
            ExitKind::Input => 2,
            ExitKind::Abort => 1,
        }
    }
}

#[derive(Debug)]
pub struct CliError {
    pub kind: ExitKind,
    pub error: anyhow::Error,
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#}", self.error)
    }
}

impl std::error::Error for CliError {}

pub type CliResult<T> = Result<T, CliError>;

/// Attaches context and an exit kind to any error.
pub trait OrExit<T> {
    fn or_input(self, context: impl fmt::Display) -> CliResult<T>;
    fn or_abort(self, context: impl fmt::Display) -> CliResult<T>;
}

impl<T, E: Into<anyhow::Error>> OrExit<T> for Result<T, E> {
    fn or_input(self, context: impl fmt::Display) -> CliResult<T> {
        self.map_err(|e| CliError {
            kind: ExitKind::Input,
            error: e.into().context(context.to_string()),
        })
    }

    fn or_abort(self, context: impl fmt::Display) -> CliResult<T> {
        self.map_err(|e| CliError {
            kind: ExitKind::Abort,
            error: e.into().context(context.to_string()),
        })
    }
}

pub fn input_error(message: impl fmt::Display) -> CliError {
    CliError {
        kind: ExitKind::Input,
        error: anyhow::anyhow!("{message}"),
    }
}
