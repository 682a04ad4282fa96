use std::collections::HashMap;
use std::path::Path;

use super::{PosteriorError, Result};

/// Column index of the blank symbol in every matrix.
pub const EPSILON_INDEX: usize = 0;
pub const EPSILON_TOKEN: &str = "<eps>";
pub const SPACE_TOKEN: &str = "<space>";

/// Ordered symbol set of a recognizer. Index 0 is always ε; the remaining
/// indices map to single Unicode scalar values.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Alphabet {
    // chars[i] is the symbol at column i + 1.
    chars: Vec<char>,
    index: HashMap<char, usize>,
}

impl Alphabet {
    /// Builds an alphabet from the non-ε symbols in column order.
    pub fn from_chars<I: IntoIterator<Item = char>>(chars: I) -> Result<Self> {
        let chars: Vec<char> = chars.into_iter().collect();
        let mut index = HashMap::with_capacity(chars.len());
        for (i, &c) in chars.iter().enumerate() {
            if index.insert(c, i + 1).is_some() {
                return Err(PosteriorError::AlphabetFormat {
                    line: i + 2,
                    message: format!("duplicate symbol {c:?}"),
                });
            }
        }
        if chars.is_empty() {
            return Err(PosteriorError::AlphabetFormat {
                line: 1,
                message: "alphabet needs at least one symbol besides ε".into(),
            });
        }
        Ok(Self { chars, index })
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, first)) if first == EPSILON_TOKEN => {}
            _ => {
                return Err(PosteriorError::AlphabetFormat {
                    line: 1,
                    message: format!("first line must be {EPSILON_TOKEN}"),
                })
            }
        }
        let mut chars = Vec::new();
        for (i, line) in lines {
            let c = match line {
                SPACE_TOKEN => ' ',
                EPSILON_TOKEN => {
                    return Err(PosteriorError::AlphabetFormat {
                        line: i + 1,
                        message: "ε may only appear on the first line".into(),
                    })
                }
                _ => {
                    let mut it = line.chars();
                    match (it.next(), it.next()) {
                        (Some(c), None) => c,
                        _ => {
                            return Err(PosteriorError::AlphabetFormat {
                                line: i + 1,
                                message: format!("expected a single symbol, found {line:?}"),
                            })
                        }
                    }
                }
            };
            chars.push(c);
        }
        Self::from_chars(chars)
    }

    /// Reads an alphabet file: `<eps>` on the first line, then one symbol per line.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| PosteriorError::Io {
            path: path.to_owned(),
            source,
        })?;
        Self::parse(&text)
    }

    /// Renders the file form accepted by [`Alphabet::parse`].
    pub fn to_file_string(&self) -> String {
        let mut out = String::from(EPSILON_TOKEN);
        out.push('\n');
        for &c in &self.chars {
            if c == ' ' {
                out.push_str(SPACE_TOKEN);
            } else {
                out.push(c);
            }
            out.push('\n');
        }
        out
    }

    /// Number of symbols including ε.
    pub fn len(&self) -> usize {
        self.chars.len() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn epsilon_index(&self) -> usize {
        EPSILON_INDEX
    }

    pub fn index_of(&self, c: char) -> Option<usize> {
        self.index.get(&c).copied()
    }

    /// The character at `index`, or `None` for ε and out-of-range indices.
    pub fn symbol(&self, index: usize) -> Option<char> {
        index
            .checked_sub(1)
            .and_then(|i| self.chars.get(i))
            .copied()
    }

    pub fn chars(&self) -> &[char] {
        &self.chars
    }
}
