use std::io::{Read, Write};
use std::path::Path;

use super::{Alphabet, PosteriorError, Result};

const MAGIC: &[u8; 4] = b"CTCP";
const FORMAT_VERSION: u16 = 1;
const HEADER_LEN: usize = 16;

/// Allowed absolute deviation of a row sum from 1. Exported posteriors are
/// 32-bit softmax outputs and drift slightly.
pub const ROW_SUM_TOLERANCE: f64 = 1e-4;

/// Character posteriors of one text line: `steps` rows, one column per
/// alphabet symbol, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorMatrix {
    line_id: String,
    steps: usize,
    cols: usize,
    probs: Vec<f32>,
}

impl PosteriorMatrix {
    /// Validates shape, range and row sums.
    pub fn new(line_id: impl Into<String>, cols: usize, probs: Vec<f32>) -> Result<Self> {
        if cols == 0 || probs.is_empty() {
            return Err(PosteriorError::EmptyMatrix);
        }
        if !probs.len().is_multiple_of(cols) {
            return Err(PosteriorError::Truncated {
                expected: probs.len().div_ceil(cols) * cols * 4,
                found: probs.len() * 4,
            });
        }
        let steps = probs.len() / cols;
        for (row, values) in probs.chunks_exact(cols).enumerate() {
            let mut sum = 0.0f64;
            for (col, &value) in values.iter().enumerate() {
                if !value.is_finite() || !(0.0..=1.0).contains(&value) {
                    return Err(PosteriorError::InvalidValue { row, col, value });
                }
                sum += f64::from(value);
            }
            if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                return Err(PosteriorError::RowSum {
                    row,
                    sum,
                    tolerance: ROW_SUM_TOLERANCE,
                });
            }
        }
        Ok(Self {
            line_id: line_id.into(),
            steps,
            cols,
            probs,
        })
    }

    pub fn from_rows(line_id: impl Into<String>, rows: &[Vec<f32>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != cols) {
            return Err(PosteriorError::Dimension {
                expected: cols,
                found: bad.len(),
            });
        }
        Self::new(line_id, cols, rows.concat())
    }

    pub fn with_line_id(mut self, line_id: impl Into<String>) -> Self {
        self.line_id = line_id.into();
        self
    }

    pub fn line_id(&self) -> &str {
        &self.line_id
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, step: usize) -> &[f32] {
        &self.probs[step * self.cols..(step + 1) * self.cols]
    }

    pub fn prob(&self, step: usize, symbol: usize) -> f32 {
        self.probs[step * self.cols + symbol]
    }

    pub fn values(&self) -> &[f32] {
        &self.probs
    }
}

/// Decodes a `CTCP` matrix from `reader` and validates it against `alphabet`.
pub fn read_matrix<R: Read>(
    mut reader: R,
    line_id: impl Into<String>,
    alphabet: &Alphabet,
) -> Result<PosteriorMatrix> {
    let io = |source| PosteriorError::Io {
        path: "<matrix>".into(),
        source,
    };
    let mut header = [0u8; HEADER_LEN];
    reader.read_exact(&mut header).map_err(io)?;
    let magic: [u8; 4] = header[0..4].try_into().unwrap();
    if &magic != MAGIC {
        return Err(PosteriorError::Magic { found: magic });
    }
    let version = u16::from_le_bytes([header[4], header[5]]);
    if version != FORMAT_VERSION {
        return Err(PosteriorError::Version(version));
    }
    let rows = u32::from_le_bytes(header[8..12].try_into().unwrap()) as usize;
    let cols = u32::from_le_bytes(header[12..16].try_into().unwrap()) as usize;
    if cols != alphabet.len() {
        return Err(PosteriorError::Dimension {
            expected: alphabet.len(),
            found: cols,
        });
    }
    if rows == 0 {
        return Err(PosteriorError::EmptyMatrix);
    }
    let expected = rows * cols * 4;
    let mut data = Vec::with_capacity(expected);
    reader.read_to_end(&mut data).map_err(io)?;
    if data.len() != expected {
        return Err(PosteriorError::Truncated {
            expected,
            found: data.len(),
        });
    }
    let probs = data
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
        .collect();
    PosteriorMatrix::new(line_id, cols, probs)
}

/// Loads a `CTCP` file; the line id defaults to the file stem.
pub fn load_matrix(path: &Path, alphabet: &Alphabet) -> Result<PosteriorMatrix> {
    let file = std::fs::File::open(path).map_err(|source| PosteriorError::Io {
        path: path.to_owned(),
        source,
    })?;
    let line_id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    read_matrix(std::io::BufReader::new(file), line_id, alphabet).map_err(|e| match e {
        PosteriorError::Io { source, .. } => PosteriorError::Io {
            path: path.to_owned(),
            source,
        },
        other => other,
    })
}

pub fn write_matrix<W: Write>(mut writer: W, matrix: &PosteriorMatrix) -> std::io::Result<()> {
    let mut buf = Vec::with_capacity(HEADER_LEN + matrix.probs.len() * 4);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    buf.extend_from_slice(&0u16.to_le_bytes());
    buf.extend_from_slice(&(matrix.steps as u32).to_le_bytes());
    buf.extend_from_slice(&(matrix.cols as u32).to_le_bytes());
    for v in &matrix.probs {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    writer.write_all(&buf)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn abc() -> Alphabet {
        Alphabet::parse("<eps>\na\nb\n").unwrap()
    }

    fn encode(rows: u32, cols: u32, values: &[f32]) -> Vec<u8> {
        let mut buf = b"CTCP".to_vec();
        buf.extend_from_slice(&1u16.to_le_bytes());
        buf.extend_from_slice(&0u16.to_le_bytes());
        buf.extend_from_slice(&rows.to_le_bytes());
        buf.extend_from_slice(&cols.to_le_bytes());
        for v in values {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        buf
    }

    #[test]
    fn one_hot_rows_load() {
        let bytes = encode(2, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        let m = read_matrix(&bytes[..], "l1", &abc()).unwrap();
        assert_eq!(m.steps(), 2);
        assert_eq!(m.prob(1, 1), 1.0);
    }

    #[test]
    fn row_sum_violation() {
        let bytes = encode(1, 3, &[0.5, 0.5, 0.5]);
        let err = read_matrix(&bytes[..], "l1", &abc()).unwrap_err();
        assert!(
            matches!(err, PosteriorError::RowSum { row: 0, .. }),
            "{err}"
        );
    }

    #[test]
    fn column_count_must_match_alphabet() {
        let bytes = encode(1, 4, &[1.0, 0.0, 0.0, 0.0]);
        let err = read_matrix(&bytes[..], "l1", &abc()).unwrap_err();
        assert!(matches!(
            err,
            PosteriorError::Dimension {
                expected: 3,
                found: 4
            }
        ));
    }

    #[test]
    fn bad_magic_and_non_finite() {
        let mut bytes = encode(1, 3, &[1.0, 0.0, 0.0]);
        bytes[0] = b'X';
        assert!(matches!(
            read_matrix(&bytes[..], "l1", &abc()),
            Err(PosteriorError::Magic { .. })
        ));
        let bytes = encode(1, 3, &[f32::NAN, 0.0, 1.0]);
        assert!(matches!(
            read_matrix(&bytes[..], "l1", &abc()),
            Err(PosteriorError::InvalidValue { .. })
        ));
    }

    #[test]
    fn truncated_payload() {
        let mut bytes = encode(2, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        bytes.pop();
        assert!(matches!(
            read_matrix(&bytes[..], "l1", &abc()),
            Err(PosteriorError::Truncated { .. })
        ));
    }

    #[test]
    fn written_bytes_match_layout() {
        let values = [0.25f32, 0.25, 0.5, 1.0, 0.0, 0.0];
        let m = PosteriorMatrix::new("x", 3, values.to_vec()).unwrap();
        let mut out = Vec::new();
        write_matrix(&mut out, &m).unwrap();
        assert_eq!(out, encode(2, 3, &values));
        let back = read_matrix(&out[..], "x", &abc()).unwrap();
        assert_eq!(back, m);
    }
}
