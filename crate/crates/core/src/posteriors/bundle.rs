use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{load_matrix, Alphabet, PosteriorError, PosteriorMatrix, Result};

/// All line matrices of one letter in reading order, with the cumulative
/// step offset at which each line ends on the concatenated time axis.
#[derive(Debug, Clone, PartialEq)]
pub struct LetterBundle {
    letter_id: String,
    lines: Vec<PosteriorMatrix>,
    boundaries: Vec<usize>,
}

impl LetterBundle {
    pub fn letter_id(&self) -> &str {
        &self.letter_id
    }

    pub fn lines(&self) -> &[PosteriorMatrix] {
        &self.lines
    }

    /// `boundaries()[k]` is one past the last raw step of line `k`.
    pub fn boundaries(&self) -> &[usize] {
        &self.boundaries
    }

    pub fn total_steps(&self) -> usize {
        self.boundaries.last().copied().unwrap_or(0)
    }

    pub fn cols(&self) -> usize {
        self.lines[0].cols()
    }

    /// Iterates over every raw row of the concatenated letter.
    pub fn rows(&self) -> impl Iterator<Item = &[f32]> + '_ {
        self.lines
            .iter()
            .flat_map(|m| (0..m.steps()).map(move |t| m.row(t)))
    }
}

pub fn concatenate(
    letter_id: impl Into<String>,
    lines: Vec<PosteriorMatrix>,
) -> Result<LetterBundle> {
    let cols = lines.first().ok_or(PosteriorError::NoLines)?.cols();
    let mut boundaries = Vec::with_capacity(lines.len());
    let mut offset = 0;
    for line in &lines {
        if line.cols() != cols {
            return Err(PosteriorError::ColumnMismatch {
                line_id: line.line_id().to_owned(),
                expected: cols,
                found: line.cols(),
            });
        }
        offset += line.steps();
        boundaries.push(offset);
    }
    Ok(LetterBundle {
        letter_id: letter_id.into(),
        lines,
        boundaries,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestLine {
    pub line_id: String,
    pub matrix: PathBuf,
}

/// Letter manifest file. Relative paths resolve against the manifest's directory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LetterManifest {
    pub letter_id: String,
    pub alphabet: PathBuf,
    pub lines: Vec<ManifestLine>,
}

impl LetterManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| PosteriorError::Io {
            path: path.to_owned(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|source| PosteriorError::Manifest {
            path: path.to_owned(),
            source,
        })
    }
}

/// Loads a manifest together with its alphabet and all line matrices.
pub fn load_letter(manifest_path: &Path) -> Result<(Alphabet, LetterBundle)> {
    let manifest = LetterManifest::load(manifest_path)?;
    let base = manifest_path.parent().unwrap_or(Path::new(""));
    let alphabet = Alphabet::load(&base.join(&manifest.alphabet))?;
    let lines = manifest
        .lines
        .iter()
        .map(|line| {
            load_matrix(&base.join(&line.matrix), &alphabet)
                .map(|m| m.with_line_id(line.line_id.clone()))
        })
        .collect::<Result<Vec<_>>>()?;
    let bundle = concatenate(manifest.letter_id, lines)?;
    Ok((alphabet, bundle))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn eps_line(id: &str, steps: usize, cols: usize) -> PosteriorMatrix {
        let mut probs = vec![0.0f32; steps * cols];
        for t in 0..steps {
            probs[t * cols] = 1.0;
        }
        PosteriorMatrix::new(id, cols, probs).unwrap()
    }

    #[test]
    fn boundaries_are_cumulative() {
        let b = concatenate("l", vec![eps_line("a", 3, 3), eps_line("b", 5, 3)]).unwrap();
        assert_eq!(b.boundaries(), &[3, 8]);
        assert_eq!(b.total_steps(), 8);
        assert_eq!(b.rows().count(), 8);
    }

    #[test]
    fn single_line_of_typical_length() {
        let b = concatenate("l", vec![eps_line("a", 214, 3)]).unwrap();
        assert_eq!(b.boundaries(), &[214]);
    }

    #[test]
    fn mixed_columns_rejected() {
        let err = concatenate("l", vec![eps_line("a", 2, 3), eps_line("b", 2, 4)]).unwrap_err();
        assert!(matches!(err, PosteriorError::ColumnMismatch { .. }));
        assert!(matches!(
            concatenate("l", vec![]),
            Err(PosteriorError::NoLines)
        ));
    }
}
