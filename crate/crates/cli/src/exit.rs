//! Mapping from library errors to process exit codes.

use tempeo_core::Error;

use crate::{EXIT_DIMENSIONS, EXIT_EMPTY, EXIT_IO_FORMAT, EXIT_USAGE};

/// A failure ready to be reported: message for stderr plus the exit code.
pub struct Failure {
    pub code: i32,
    pub message: String,
}

pub type CmdResult = Result<(), Failure>;

impl Failure {
    pub fn usage(message: impl Into<String>) -> Failure {
        Failure {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(err: Error) -> Failure {
        let code = match &err {
            Error::Io { .. } | Error::Format { .. } => EXIT_IO_FORMAT,
            Error::DimensionMismatch { .. } | Error::TooSmall { .. } => EXIT_DIMENSIONS,
            Error::EmptySupport(_) => EXIT_EMPTY,
            // Bad values inside otherwise well-formed inputs.
            Error::UnitsMismatch { .. }
            | Error::InvalidDepth(_)
            | Error::NearSingularRotation { .. }
            | Error::Domain(_) => EXIT_IO_FORMAT,
        };
        Failure {
            code,
            message: err.to_string(),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(err: std::io::Error) -> Failure {
        Failure {
            code: EXIT_IO_FORMAT,
            message: err.to_string(),
        }
    }
}

/// Checks a loaded raster against reference dimensions, naming the file
/// that disagrees.
pub fn expect_dims(
    what: &str,
    path: &std::path::Path,
    found: (usize, usize),
    expected: (usize, usize),
) -> CmdResult {
    if found == expected {
        Ok(())
    } else {
        Err(Failure {
            code: EXIT_DIMENSIONS,
            message: format!(
                "{what} {} is {}x{}, expected {}x{}",
                path.display(),
                found.0,
                found.1,
                expected.0,
                expected.1
            ),
        })
    }
}
