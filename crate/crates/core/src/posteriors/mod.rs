//! Posterior data model: alphabet, per-line CTC posterior matrices, letter
//! bundles and ε-compression.

mod alphabet;
mod bundle;
mod compress;
mod matrix;

use std::path::PathBuf;

pub use alphabet::{Alphabet, EPSILON_INDEX, EPSILON_TOKEN, SPACE_TOKEN};
pub use bundle::{concatenate, load_letter, LetterBundle, LetterManifest, ManifestLine};
pub use compress::{compression_stats, epsilon_compress, CompressedSequence, CompressionStats};
pub use matrix::{load_matrix, read_matrix, write_matrix, PosteriorMatrix, ROW_SUM_TOLERANCE};

#[derive(Debug, thiserror::Error)]
pub enum PosteriorError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("alphabet format error at line {line}: {message}")]
    AlphabetFormat { line: usize, message: String },
    #[error("bad magic bytes {found:?}, expected \"CTCP\"")]
    Magic { found: [u8; 4] },
    #[error("unsupported matrix format version {0}")]
    Version(u16),
    #[error("truncated matrix data: expected {expected} bytes of values, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("matrix has {found} columns but the alphabet has {expected} symbols")]
    Dimension { expected: usize, found: usize },
    #[error("matrix has no rows")]
    EmptyMatrix,
    #[error("non-finite or out-of-range value {value} at row {row}, column {col}")]
    InvalidValue { row: usize, col: usize, value: f32 },
    #[error("row {row} sums to {sum}, outside tolerance {tolerance}")]
    RowSum {
        row: usize,
        sum: f64,
        tolerance: f64,
    },
    #[error("a letter needs at least one line")]
    NoLines,
    #[error("line {line_id} has {found} columns, expected {expected}")]
    ColumnMismatch {
        line_id: String,
        expected: usize,
        found: usize,
    },
    #[error("compression threshold {0} outside (0, 1)")]
    Threshold(f64),
    #[error("manifest {path}: {source}")]
    Manifest {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

pub type Result<T, E = PosteriorError> = std::result::Result<T, E>;
