//! Linear transcription automaton with ε interleaving and skip arcs.
//!
//! For a transcription `c1 … cn` the automaton has `2n + 1` states
//! `ε0, c1, ε1, c2, …, cn, εn`. State ids follow that order: `εk` is `2k`
//! and the character at zero-based position `i` is `2i + 1`. Character
//! states may be entered from themselves, from the preceding ε state, or
//! directly from the preceding character when the two characters differ.

use std::fmt::Write as _;

use crate::posteriors::{Alphabet, EPSILON_INDEX, SPACE_TOKEN};

/// Guards for exhaustive path enumeration.
pub const MAX_ENUMERATION_CELLS: usize = 1_000_000;
pub const MAX_PATH_EXTENSIONS: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum FsaError {
    #[error("transcription contains a newline at character {position}")]
    Newline { position: usize },
    #[error("transcription is empty")]
    Empty,
    #[error("character {ch:?} at position {position} is not in the alphabet")]
    UnknownSymbol { ch: char, position: usize },
    #[error("path length must be at least 1")]
    ZeroLength,
    #[error("instance too large to enumerate ({states} states x {steps} steps)")]
    TooLarge { states: usize, steps: usize },
}

/// Letter transcription with newlines removed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transcription {
    chars: Vec<char>,
}

impl Transcription {
    /// Rejects text that still contains line breaks.
    pub fn new(text: &str) -> Result<Self, FsaError> {
        if let Some(position) = text.chars().position(is_line_break) {
            return Err(FsaError::Newline { position });
        }
        Ok(Self {
            chars: text.chars().collect(),
        })
    }

    /// Discards every line break of a raw letter transcription.
    pub fn from_letter_text(text: &str) -> Self {
        Self {
            chars: text.chars().filter(|&c| !is_line_break(c)).collect(),
        }
    }

    pub(crate) fn from_chars(chars: Vec<char>) -> Self {
        debug_assert!(!chars.iter().copied().any(is_line_break));
        Self { chars }
    }

    pub fn chars(&self) -> &[char] {
        &self.chars
    }

    pub fn len(&self) -> usize {
        self.chars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chars.is_empty()
    }

    pub fn as_string(&self) -> String {
        self.chars.iter().collect()
    }
}

fn is_line_break(c: char) -> bool {
    c == '\n' || c == '\r'
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StateKind {
    /// ε state after `gap` characters.
    Blank { gap: usize },
    /// Character state for zero-based transcription position `pos`.
    Char { pos: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct State {
    pub kind: StateKind,
    /// Alphabet column emitted by this state.
    pub symbol: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TranscriptionFsa {
    chars: Vec<char>,
    states: Vec<State>,
    pred_offsets: Vec<usize>,
    preds: Vec<usize>,
}

pub fn build_fsa(
    transcription: &Transcription,
    alphabet: &Alphabet,
) -> Result<TranscriptionFsa, FsaError> {
    if transcription.is_empty() {
        return Err(FsaError::Empty);
    }
    let chars = transcription.chars().to_vec();
    let n = chars.len();
    let mut states = Vec::with_capacity(2 * n + 1);
    let mut pred_offsets = Vec::with_capacity(2 * n + 2);
    let mut preds = Vec::with_capacity(5 * n + 1);

    // Predecessor order is the tie-break order of the aligner:
    // self-loop, then ε predecessor, then skip predecessor.
    states.push(State {
        kind: StateKind::Blank { gap: 0 },
        symbol: EPSILON_INDEX,
    });
    pred_offsets.push(0);
    preds.push(0);
    for (pos, &ch) in chars.iter().enumerate() {
        let symbol = alphabet
            .index_of(ch)
            .ok_or(FsaError::UnknownSymbol { ch, position: pos })?;
        let id = 2 * pos + 1;
        states.push(State {
            kind: StateKind::Char { pos },
            symbol,
        });
        pred_offsets.push(preds.len());
        preds.push(id);
        preds.push(id - 1);
        if pos > 0 && chars[pos - 1] != ch {
            preds.push(id - 2);
        }
        states.push(State {
            kind: StateKind::Blank { gap: pos + 1 },
            symbol: EPSILON_INDEX,
        });
        pred_offsets.push(preds.len());
        preds.push(id + 1);
        preds.push(id);
    }
    pred_offsets.push(preds.len());
    Ok(TranscriptionFsa {
        chars,
        states,
        pred_offsets,
        preds,
    })
}

impl TranscriptionFsa {
    pub fn state_count(&self) -> usize {
        self.states.len()
    }

    pub fn char_count(&self) -> usize {
        self.chars.len()
    }

    pub fn chars(&self) -> &[char] {
        &self.chars
    }

    pub fn states(&self) -> &[State] {
        &self.states
    }

    pub fn state(&self, id: usize) -> State {
        self.states[id]
    }

    /// Predecessors of `id` in tie-break order (self, ε, skip).
    pub fn predecessors(&self, id: usize) -> &[usize] {
        &self.preds[self.pred_offsets[id]..self.pred_offsets[id + 1]]
    }

    pub fn initial_states(&self) -> [usize; 2] {
        [0, 1]
    }

    pub fn final_states(&self) -> [usize; 2] {
        let last = self.states.len() - 1;
        [last - 1, last]
    }

    pub fn is_initial(&self, id: usize) -> bool {
        id <= 1
    }

    pub fn is_final(&self, id: usize) -> bool {
        id + 2 >= self.states.len()
    }

    /// Inverts the predecessor relation. Successor lists are ascending.
    pub fn successors(&self) -> Vec<Vec<usize>> {
        let mut succ = vec![Vec::new(); self.states.len()];
        for to in 0..self.states.len() {
            for &from in self.predecessors(to) {
                succ[from].push(to);
            }
        }
        for s in &mut succ {
            s.sort_unstable();
        }
        succ
    }

    /// Shortest accepted path: every character once, plus one ε between
    /// each pair of identical neighbours.
    pub fn min_path_len(&self) -> usize {
        self.chars.len() + self.chars.windows(2).filter(|w| w[0] == w[1]).count()
    }

    pub fn max_symbol(&self) -> usize {
        self.states.iter().map(|s| s.symbol).max().unwrap_or(0)
    }

    /// One line per state: id, label, position, predecessors and flags.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for (id, state) in self.states.iter().enumerate() {
            let (label, where_) = match state.kind {
                StateKind::Blank { gap } => ("<eps>".to_owned(), format!("gap={gap}")),
                StateKind::Char { pos } => {
                    let c = self.chars[pos];
                    let label = if c == ' ' {
                        SPACE_TOKEN.to_owned()
                    } else {
                        c.to_string()
                    };
                    (label, format!("pos={pos}"))
                }
            };
            let preds: Vec<String> = self
                .predecessors(id)
                .iter()
                .map(|p| p.to_string())
                .collect();
            let _ = write!(out, "{id} {label} {where_} preds={}", preds.join(","));
            if self.is_initial(id) {
                out.push_str(" initial");
            }
            if self.is_final(id) {
                out.push_str(" final");
            }
            out.push('\n');
        }
        out
    }

    /// Minimal number of further states needed from `id` to stop in a final state.
    fn distance_to_final(&self) -> Vec<usize> {
        let n = self.states.len();
        let mut dist = vec![usize::MAX; n];
        // Predecessor ids never exceed the state id, so a reverse sweep suffices.
        for id in (0..n).rev() {
            if self.is_final(id) {
                dist[id] = 0;
            }
            if dist[id] == usize::MAX {
                continue;
            }
            for &p in self.predecessors(id) {
                if p != id {
                    dist[p] = dist[p].min(dist[id] + 1);
                }
            }
        }
        dist
    }
}

/// Every accepted state sequence of exactly `length` states, in
/// lexicographic order. Intended for small instances only.
pub fn enumerate_paths(fsa: &TranscriptionFsa, length: usize) -> Result<Vec<Vec<usize>>, FsaError> {
    if length == 0 {
        return Err(FsaError::ZeroLength);
    }
    let too_large = FsaError::TooLarge {
        states: fsa.state_count(),
        steps: length,
    };
    if fsa.state_count().saturating_mul(length) > MAX_ENUMERATION_CELLS {
        return Err(too_large);
    }
    let succ = fsa.successors();
    let dist = fsa.distance_to_final();
    let mut paths = Vec::new();
    let mut path = Vec::with_capacity(length);
    let mut extensions = 0usize;
    // Explicit stack of (state, depth) pairs.
    let mut stack: Vec<(usize, usize)> =
        fsa.initial_states().iter().rev().map(|&s| (s, 0)).collect();
    while let Some((state, depth)) = stack.pop() {
        path.truncate(depth);
        if dist[state] > length - 1 - depth {
            continue;
        }
        extensions += 1;
        if extensions > MAX_PATH_EXTENSIONS {
            return Err(too_large);
        }
        path.push(state);
        if depth + 1 == length {
            if fsa.is_final(state) {
                paths.push(path.clone());
            }
            continue;
        }
        for &next in succ[state].iter().rev() {
            stack.push((next, depth + 1));
        }
    }
    Ok(paths)
}

/// Number of accepted paths of exactly `length` states, by forward counting.
pub fn count_paths(fsa: &TranscriptionFsa, length: usize) -> u128 {
    if length == 0 {
        return 0;
    }
    let n = fsa.state_count();
    let mut col = vec![0u128; n];
    for s in fsa.initial_states() {
        col[s] = 1;
    }
    for _ in 1..length {
        col = (0..n)
            .map(|s| fsa.predecessors(s).iter().map(|&p| col[p]).sum())
            .collect();
    }
    fsa.final_states().iter().map(|&s| col[s]).sum()
}
