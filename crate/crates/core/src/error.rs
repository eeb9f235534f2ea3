//! Error type shared by every module in the crate.

use std::path::PathBuf;
use thiserror::Error;

/// Crate-wide error enum.
///
/// Variants are grouped by how callers (in particular the CLI) react to
/// them: I/O and format problems, shape/units inconsistencies between
/// rasters, numeric domain violations, and empty reductions.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("format error in {path}: {detail}")]
    Format { path: PathBuf, detail: String },

    #[error("dimension mismatch for {what}: expected {expected_width}x{expected_height}, found {found_width}x{found_height}")]
    DimensionMismatch {
        what: &'static str,
        expected_width: usize,
        expected_height: usize,
        found_width: usize,
        found_height: usize,
    },

    #[error("units mismatch for {what}: expected {expected}, found {found}")]
    UnitsMismatch {
        what: &'static str,
        expected: &'static str,
        found: &'static str,
    },

    #[error("image too small for {what}: {width}x{height} (minimum {min_width}x{min_height})")]
    TooSmall {
        what: &'static str,
        width: usize,
        height: usize,
        min_width: usize,
        min_height: usize,
    },

    #[error("invalid depth {0} (must be positive)")]
    InvalidDepth(f64),

    #[error("rotation angle {angle} too close to pi for a well-conditioned log map")]
    NearSingularRotation { angle: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("empty support: {0}")]
    EmptySupport(&'static str),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn dims(
        what: &'static str,
        expected: (usize, usize),
        found: (usize, usize),
    ) -> Self {
        Error::DimensionMismatch {
            what,
            expected_width: expected.0,
            expected_height: expected.1,
            found_width: found.0,
            found_height: found.1,
        }
    }
}

/// Checks that `found` matches `expected` (width, height) and reports the
/// offending raster by name otherwise.
pub(crate) fn ensure_dims(
    what: &'static str,
    expected: (usize, usize),
    found: (usize, usize),
) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::dims(what, expected, found))
    }
}
