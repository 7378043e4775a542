use std::fmt;
use std::path::Path;

use riemann_latent::Error;

/// A failure with the exit code it maps to.
#[derive(Debug)]
pub struct CliError {
    message: String,
    code: i32,
}

impl CliError {
    pub const INVALID: i32 = 1;
    pub const IO: i32 = 2;

    pub fn usage(message: impl Into<String>) -> Self {
        CliError {
            message: message.into(),
            code: Self::INVALID,
        }
    }

    /// Prefixes a library error with the file it concerns.
    pub fn at(path: &Path, err: impl Into<CliError>) -> Self {
        let inner = err.into();
        CliError {
            message: format!("{}: {}", path.display(), inner.message),
            code: inner.code,
        }
    }

    pub fn exit_code(&self) -> i32 {
        self.code
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError {
            code: if e.is_io() { Self::IO } else { Self::INVALID },
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError {
            message: e.to_string(),
            code: Self::IO,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}
