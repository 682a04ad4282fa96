//! Helpers shared by the integration test targets.

#![allow(dead_code)]

use ctc_align::posteriors::{concatenate, Alphabet, LetterBundle, PosteriorMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A dense probability row: uniform weights, normalized.
pub fn dense_row(rng: &mut impl Rng, cols: usize) -> Vec<f32> {
    let w: Vec<f64> = (0..cols).map(|_| rng.random::<f64>() + 1e-3).collect();
    let total: f64 = w.iter().sum();
    w.iter().map(|x| (x / total) as f32).collect()
}

/// A row where ε holds `eps` and the rest is spread at random.
pub fn blank_row(rng: &mut impl Rng, cols: usize, eps: f64) -> Vec<f32> {
    let w: Vec<f64> = (1..cols).map(|_| rng.random::<f64>() + 1e-3).collect();
    let total: f64 = w.iter().sum();
    let mut row = vec![eps as f32];
    row.extend(w.iter().map(|x| ((1.0 - eps) * x / total) as f32));
    row
}

/// A letter of random lines mixing dense rows and ε-dominated rows, so that
/// compression has runs to merge.
pub fn mixed_bundle(
    rng: &mut impl Rng,
    cols: usize,
    line_steps: &[usize],
    theta: f64,
) -> LetterBundle {
    let matrices = line_steps
        .iter()
        .enumerate()
        .map(|(k, &steps)| {
            let rows: Vec<Vec<f32>> = (0..steps)
                .map(|_| match rng.random_range(0..3) {
                    0 => dense_row(rng, cols),
                    1 => {
                        let eps = theta + (1.0 - theta) * rng.random_range(0.05..0.95);
                        blank_row(rng, cols, eps)
                    }
                    _ => {
                        let eps = rng.random_range(0.3..theta);
                        blank_row(rng, cols, eps)
                    }
                })
                .collect();
            PosteriorMatrix::from_rows(format!("l{k}"), &rows).unwrap()
        })
        .collect();
    concatenate("random", matrices).unwrap()
}

/// Dense random posteriors split into lines of the given lengths.
pub fn dense_bundle(rng: &mut impl Rng, cols: usize, line_steps: &[usize]) -> LetterBundle {
    let matrices = line_steps
        .iter()
        .enumerate()
        .map(|(k, &steps)| {
            let rows: Vec<Vec<f32>> = (0..steps).map(|_| dense_row(rng, cols)).collect();
            PosteriorMatrix::from_rows(format!("l{k}"), &rows).unwrap()
        })
        .collect();
    concatenate("random", matrices).unwrap()
}

/// Splits `total` into `parts` positive lengths.
pub fn split_lengths(rng: &mut impl Rng, total: usize, parts: usize) -> Vec<usize> {
    assert!(parts >= 1 && total >= parts);
    let mut cuts: Vec<usize> = rand::seq::index::sample(rng, total - 1, parts - 1)
        .into_iter()
        .map(|c| c + 1)
        .collect();
    cuts.sort_unstable();
    let mut out = Vec::with_capacity(parts);
    let mut prev = 0;
    for c in cuts.into_iter().chain(std::iter::once(total)) {
        out.push(c - prev);
        prev = c;
    }
    out
}

pub fn random_text(rng: &mut impl Rng, symbols: &[char], len: usize) -> String {
    (0..len)
        .map(|_| symbols[rng.random_range(0..symbols.len())])
        .collect()
}

/// Lowercase words with spaces, used for letter-like lines.
pub const WORDS: &[&str] = &[
    "gratia", "domine", "frater", "epistola", "scripsi", "tibi", "nobis", "dei", "pacem", "cum",
    "sed", "quod", "litteras", "tuas", "accepi", "salutem", "ecclesia", "verbum", "amicus", "vale",
    "hodie", "tempore", "nostro", "fratres", "omnes", "in", "et", "ad", "de", "non",
];

pub fn words(rng: &mut impl Rng, count: usize) -> Vec<String> {
    (0..count)
        .map(|_| WORDS[rng.random_range(0..WORDS.len())].to_owned())
        .collect()
}

/// Packs words into lines of roughly `lo..=hi` characters, each line
/// carrying its trailing space except the last.
pub fn pack_lines(rng: &mut impl Rng, lo: usize, hi: usize, line_count: usize) -> Vec<String> {
    let mut lines = Vec::with_capacity(line_count);
    for _ in 0..line_count {
        let target = rng.random_range(lo..=hi);
        let mut line = String::new();
        loop {
            let w = WORDS[rng.random_range(0..WORDS.len())];
            if !line.is_empty() && line.len() + w.len() + 1 > target {
                break;
            }
            line.push_str(w);
            line.push(' ');
            if line.len() >= target {
                break;
            }
        }
        lines.push(line);
    }
    if let Some(last) = lines.last_mut() {
        last.pop();
    }
    lines
}

/// The 79-symbol alphabet of a typical handwriting recognizer: ε, space,
/// letters, digits and punctuation.
pub fn large_alphabet() -> Alphabet {
    let mut chars: Vec<char> = vec![' '];
    chars.extend('a'..='z');
    chars.extend('A'..='Z');
    chars.extend('0'..='9');
    chars.extend(".,;:!?'-()/&=+*".chars());
    assert_eq!(chars.len(), 78);
    Alphabet::from_chars(chars).unwrap()
}

/// Full-table edit distance.
pub fn edit_distance_table<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut d = vec![vec![0usize; b.len() + 1]; a.len() + 1];
    for (i, row) in d.iter_mut().enumerate() {
        row[0] = i;
    }
    for (j, cell) in d[0].iter_mut().enumerate() {
        *cell = j;
    }
    for i in 1..=a.len() {
        for j in 1..=b.len() {
            let sub = d[i - 1][j - 1] + usize::from(a[i - 1] != b[j - 1]);
            d[i][j] = sub.min(d[i - 1][j] + 1).min(d[i][j - 1] + 1);
        }
    }
    d[a.len()][b.len()]
}

/// Score and states of every accepted path, best first; ties keep
/// enumeration order.
pub fn ranked_paths(
    compressed: &ctc_align::posteriors::CompressedSequence,
    fsa: &ctc_align::fsa::TranscriptionFsa,
) -> Vec<(f64, Vec<usize>)> {
    let mut scored: Vec<(f64, Vec<usize>)> =
        ctc_align::fsa::enumerate_paths(fsa, compressed.steps())
            .unwrap()
            .into_iter()
            .map(|p| {
                let s = p
                    .iter()
                    .enumerate()
                    .map(|(t, &q)| compressed.log_prob(t, fsa.state(q).symbol))
                    .sum();
                (s, p)
            })
            .collect();
    scored.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
    scored
}
