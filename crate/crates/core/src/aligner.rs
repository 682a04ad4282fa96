//! Token-passing Viterbi search over the compressed letter posteriors and
//! the transcription automaton, followed by line-break insertion and
//! per-line confidence scoring.

use std::ops::Range;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::fsa::{Transcription, TranscriptionFsa};
use crate::posteriors::CompressedSequence;

/// Steps averaged at each end of a line for the boundary confidence.
pub const BOUNDARY_STEPS: usize = 6;
/// Lines with fewer characters get a boundary confidence of zero.
pub const MIN_BOUNDARY_CHARS: usize = 12;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AlignError {
    #[error(
        "alignment infeasible: transcription needs at least {required} steps, letter has {available}"
    )]
    Infeasible { required: usize, available: usize },
    #[error("alignment numerically infeasible: every path has zero probability at step {step}")]
    NumericallyInfeasible { step: usize },
    #[error("transcription uses alphabet column {symbol}, posteriors have {cols} columns")]
    SymbolOutOfRange { symbol: usize, cols: usize },
}

/// Optimal state sequence with its per-step emission probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSolution {
    pub states: Vec<usize>,
    pub log_prob: f64,
    pub per_step_prob: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignedLine {
    pub line_id: String,
    /// Empty for gap lines.
    pub text: String,
    /// First compressed step of the line.
    pub start_step: usize,
    /// Last compressed step of the line (inclusive).
    pub end_step: usize,
    pub gamma: f64,
    pub gamma6: f64,
    /// Characters of the transcription rendered in `text`.
    #[serde(skip)]
    pub char_span: Range<usize>,
    /// Whether the whitespace right after `char_span` was dropped at the line break.
    #[serde(skip)]
    pub consumed_whitespace: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentResult {
    pub letter_id: String,
    pub total_log_prob: f64,
    pub runtime_seconds: f64,
    pub lines: Vec<AlignedLine>,
}

impl AlignmentResult {
    /// SHA-256 over everything except the runtime, so reruns hash identically.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.letter_id.as_bytes());
        h.update([0]);
        h.update(self.total_log_prob.to_le_bytes());
        for line in &self.lines {
            h.update(line.line_id.as_bytes());
            h.update([0]);
            h.update(line.text.as_bytes());
            h.update([0]);
            h.update((line.start_step as u64).to_le_bytes());
            h.update((line.end_step as u64).to_le_bytes());
            h.update(line.gamma.to_le_bytes());
            h.update(line.gamma6.to_le_bytes());
        }
        hex::encode(h.finalize())
    }
}

/// Memory figures of one search.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SearchStats {
    /// Tokens held in the single score column.
    pub column_len: usize,
    /// Largest number of backpointer records alive at once.
    pub peak_trace_records: usize,
}

const NO_TRACE: u32 = u32::MAX;
const MIN_GC_THRESHOLD: usize = 1 << 12;

#[derive(Debug, Clone, Copy)]
struct TraceRecord {
    step: u32,
    state: u32,
    parent: u32,
}

/// Backpointer records, one per state change along a token's history.
/// Unreachable records are compacted away once the arena doubles.
struct TraceArena {
    records: Vec<TraceRecord>,
    gc_threshold: usize,
    peak: usize,
}

impl TraceArena {
    fn new(states: usize) -> Self {
        Self {
            records: Vec::new(),
            gc_threshold: MIN_GC_THRESHOLD.max(4 * states),
            peak: 0,
        }
    }

    fn push(&mut self, step: usize, state: usize, parent: u32) -> u32 {
        let id = self.records.len() as u32;
        self.records.push(TraceRecord {
            step: step as u32,
            state: state as u32,
            parent,
        });
        self.peak = self.peak.max(self.records.len());
        id
    }

    fn maybe_collect(&mut self, roots: &mut [u32]) {
        if self.records.len() <= self.gc_threshold {
            return;
        }
        let len = self.records.len();
        let mut keep = vec![false; len];
        for &root in roots.iter() {
            let mut i = root;
            while i != NO_TRACE && !keep[i as usize] {
                keep[i as usize] = true;
                i = self.records[i as usize].parent;
            }
        }
        // Parents always precede children, so one forward pass can remap.
        let mut remap = vec![NO_TRACE; len];
        let mut kept = 0usize;
        for i in 0..len {
            if !keep[i] {
                continue;
            }
            let mut rec = self.records[i];
            if rec.parent != NO_TRACE {
                rec.parent = remap[rec.parent as usize];
            }
            self.records[kept] = rec;
            remap[i] = kept as u32;
            kept += 1;
        }
        self.records.truncate(kept);
        for root in roots.iter_mut() {
            if *root != NO_TRACE {
                *root = remap[*root as usize];
            }
        }
        self.gc_threshold = self.gc_threshold.max(2 * kept);
    }

    /// Expands the record chain ending at `last` into a full state sequence.
    fn expand(&self, last: u32, steps: usize) -> Vec<usize> {
        let mut entries = Vec::new();
        let mut i = last;
        while i != NO_TRACE {
            let rec = self.records[i as usize];
            entries.push(rec);
            i = rec.parent;
        }
        entries.reverse();
        let mut states = Vec::with_capacity(steps);
        for (k, rec) in entries.iter().enumerate() {
            let until = entries.get(k + 1).map_or(steps, |next| next.step as usize);
            states.extend(std::iter::repeat_n(
                rec.state as usize,
                until - rec.step as usize,
            ));
        }
        states
    }
}

/// Finds the highest-scoring accepted path through `fsa` for the compressed
/// letter, keeping a single score column updated in place.
pub fn solve_path(
    compressed: &CompressedSequence,
    fsa: &TranscriptionFsa,
) -> Result<PathSolution, AlignError> {
    solve_path_with_stats(compressed, fsa).map(|(path, _)| path)
}

pub fn solve_path_with_stats(
    compressed: &CompressedSequence,
    fsa: &TranscriptionFsa,
) -> Result<(PathSolution, SearchStats), AlignError> {
    let steps = compressed.steps();
    let required = fsa.min_path_len();
    if steps < required {
        return Err(AlignError::Infeasible {
            required,
            available: steps,
        });
    }
    let symbol = fsa.max_symbol();
    if symbol >= compressed.cols() {
        return Err(AlignError::SymbolOutOfRange {
            symbol,
            cols: compressed.cols(),
        });
    }

    let n = fsa.state_count();
    let symbols: Vec<usize> = fsa.states().iter().map(|s| s.symbol).collect();
    let mut score = vec![f64::NEG_INFINITY; n];
    let mut trace = vec![NO_TRACE; n];
    let mut arena = TraceArena::new(n);

    let row = compressed.log_row(0);
    for s in fsa.initial_states() {
        score[s] = row[symbols[s]];
        if score[s] > f64::NEG_INFINITY {
            trace[s] = arena.push(0, s, NO_TRACE);
        }
    }
    if score.iter().all(|&v| v == f64::NEG_INFINITY) {
        return Err(AlignError::NumericallyInfeasible { step: 0 });
    }

    for t in 1..steps {
        let row = compressed.log_row(t);
        // States beyond 2t + 1 cannot hold a token yet.
        let reachable = (2 * t + 2).min(n);
        let mut alive = false;
        // Predecessor ids never exceed the state id: a descending sweep
        // reads only values from step t - 1.
        for s in (0..reachable).rev() {
            let mut best = f64::NEG_INFINITY;
            let mut from = usize::MAX;
            for &p in fsa.predecessors(s) {
                if score[p] > best {
                    best = score[p];
                    from = p;
                }
            }
            let next = best + row[symbols[s]];
            if from == usize::MAX || next == f64::NEG_INFINITY {
                score[s] = f64::NEG_INFINITY;
                trace[s] = NO_TRACE;
                continue;
            }
            alive = true;
            score[s] = next;
            if from != s {
                trace[s] = arena.push(t, s, trace[from]);
            }
        }
        if !alive {
            return Err(AlignError::NumericallyInfeasible { step: t });
        }
        arena.maybe_collect(&mut trace);
    }

    // ε-final wins ties against the character-final state.
    let [char_final, blank_final] = fsa.final_states();
    let best = if score[char_final] > score[blank_final] {
        char_final
    } else {
        blank_final
    };
    if score[best] == f64::NEG_INFINITY {
        return Err(AlignError::NumericallyInfeasible { step: steps - 1 });
    }
    let states = arena.expand(trace[best], steps);
    debug_assert_eq!(states.len(), steps);
    let per_step_prob = states
        .iter()
        .enumerate()
        .map(|(t, &s)| compressed.log_prob(t, symbols[s]).exp())
        .collect();
    let stats = SearchStats {
        column_len: n,
        peak_trace_records: arena.peak,
    };
    Ok((
        PathSolution {
            states,
            log_prob: score[best],
            per_step_prob,
        },
        stats,
    ))
}

/// Mean path probability over `span`, and the boundary confidence: the
/// average of the means over the first and last six steps. The boundary
/// confidence is zero for lines under twelve characters or twelve steps.
pub fn line_confidences(path: &PathSolution, span: Range<usize>, text_chars: usize) -> (f64, f64) {
    if span.is_empty() {
        return (0.0, 0.0);
    }
    let probs = &path.per_step_prob[span];
    let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
    let gamma = mean(probs);
    let gamma6 = if text_chars < MIN_BOUNDARY_CHARS || probs.len() < 2 * BOUNDARY_STEPS {
        0.0
    } else {
        let head = mean(&probs[..BOUNDARY_STEPS]);
        let tail = mean(&probs[probs.len() - BOUNDARY_STEPS..]);
        (head + tail) / 2.0
    };
    (gamma.clamp(0.0, 1.0), gamma6.clamp(0.0, 1.0))
}

/// Splits the transcription at the line breaks of the optimal path.
///
/// A character belongs to the line in which it is first emitted. A single
/// whitespace character that is the last emission of a line, with more
/// lines following, is dropped from the rendered text.
pub fn insert_newlines(
    path: &PathSolution,
    compressed: &CompressedSequence,
    transcription: &Transcription,
) -> Vec<AlignedLine> {
    let chars = transcription.chars();
    let line_of_step = compressed.line_of_step();
    let line_count = compressed.line_count();

    // Line in which each character is first emitted; non-decreasing in position.
    let mut char_line = vec![0usize; chars.len()];
    for (t, &s) in path.states.iter().enumerate() {
        if s % 2 == 1 && (t == 0 || path.states[t - 1] != s) {
            char_line[s / 2] = line_of_step[t];
        }
    }

    let mut lines = Vec::with_capacity(line_count);
    let mut pos = 0;
    for k in 0..line_count {
        let start = pos;
        while pos < chars.len() && char_line[pos] == k {
            pos += 1;
        }
        let consumed = pos > start && k + 1 < line_count && chars[pos - 1].is_whitespace();
        let end = if consumed { pos - 1 } else { pos };
        let text: String = chars[start..end].iter().collect();
        let range = compressed.line_range(k);
        let (gamma, gamma6) = line_confidences(path, range.clone(), end - start);
        lines.push(AlignedLine {
            line_id: compressed.line_ids()[k].clone(),
            text,
            start_step: range.start,
            end_step: range.end - 1,
            gamma,
            gamma6,
            char_span: start..end,
            consumed_whitespace: consumed,
        });
    }
    lines
}

/// Aligns one letter: optimal path search, line splitting and confidences.
pub fn align_letter(
    compressed: &CompressedSequence,
    fsa: &TranscriptionFsa,
) -> Result<AlignmentResult, AlignError> {
    let started = Instant::now();
    let path = solve_path(compressed, fsa)?;
    let transcription = Transcription::from_chars(fsa.chars().to_vec());
    let lines = insert_newlines(&path, compressed, &transcription);
    Ok(AlignmentResult {
        letter_id: compressed.letter_id().to_owned(),
        total_log_prob: path.log_prob,
        runtime_seconds: started.elapsed().as_secs_f64(),
        lines,
    })
}
