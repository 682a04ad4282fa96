use std::ops::Range;

use serde::Serialize;

use super::{LetterBundle, PosteriorError, Result, EPSILON_INDEX};

/// Letter posteriors after ε-compression, held as natural-log probabilities.
///
/// Each compressed step covers a half-open range of raw steps. Steps that
/// merge a run of ε-dominant raw steps carry, for every symbol, the sum of
/// the constituent log probabilities, so rows no longer sum to one.
#[derive(Debug, Clone, PartialEq)]
pub struct CompressedSequence {
    letter_id: String,
    line_ids: Vec<String>,
    cols: usize,
    raw_steps: usize,
    log_probs: Vec<f64>,
    origin_spans: Vec<Range<usize>>,
    line_of_step: Vec<usize>,
    // Compressed-step range occupied by each line.
    line_ranges: Vec<Range<usize>>,
}

impl CompressedSequence {
    pub fn letter_id(&self) -> &str {
        &self.letter_id
    }

    pub fn line_ids(&self) -> &[String] {
        &self.line_ids
    }

    pub fn line_count(&self) -> usize {
        self.line_ids.len()
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn steps(&self) -> usize {
        self.origin_spans.len()
    }

    pub fn raw_steps(&self) -> usize {
        self.raw_steps
    }

    pub fn log_row(&self, step: usize) -> &[f64] {
        &self.log_probs[step * self.cols..(step + 1) * self.cols]
    }

    pub fn log_prob(&self, step: usize, symbol: usize) -> f64 {
        self.log_probs[step * self.cols + symbol]
    }

    pub fn prob(&self, step: usize, symbol: usize) -> f64 {
        self.log_prob(step, symbol).exp()
    }

    pub fn origin_spans(&self) -> &[Range<usize>] {
        &self.origin_spans
    }

    pub fn line_of_step(&self) -> &[usize] {
        &self.line_of_step
    }

    /// Compressed steps belonging to line `line`.
    pub fn line_range(&self, line: usize) -> Range<usize> {
        self.line_ranges[line].clone()
    }

    pub fn compression_ratio(&self) -> f64 {
        self.raw_steps as f64 / self.steps() as f64
    }

    /// Compresses this sequence again, treating every compressed step as a raw step.
    pub fn recompress(&self, theta: f64) -> Result<CompressedSequence> {
        check_theta(theta)?;
        let boundaries: Vec<usize> = self.line_ranges.iter().map(|r| r.end).collect();
        Ok(compress_log_rows(
            self.letter_id.clone(),
            self.line_ids.clone(),
            self.cols,
            &self.log_probs,
            &boundaries,
            |t| self.prob(t, EPSILON_INDEX) > theta,
        ))
    }
}

fn check_theta(theta: f64) -> Result<()> {
    if theta > 0.0 && theta < 1.0 {
        Ok(())
    } else {
        Err(PosteriorError::Threshold(theta))
    }
}

/// Merges every maximal run of consecutive raw steps with `P(ε) > theta` into
/// one step whose probability for each symbol is the product over the run.
/// Runs never cross line boundaries.
pub fn epsilon_compress(bundle: &LetterBundle, theta: f64) -> Result<CompressedSequence> {
    check_theta(theta)?;
    let cols = bundle.cols();
    let mut log_probs = Vec::with_capacity(bundle.total_steps() * cols);
    let mut blank = Vec::with_capacity(bundle.total_steps());
    for row in bundle.rows() {
        log_probs.extend(row.iter().map(|&p| f64::from(p).ln()));
        blank.push(f64::from(row[EPSILON_INDEX]) > theta);
    }
    let line_ids = bundle
        .lines()
        .iter()
        .map(|l| l.line_id().to_owned())
        .collect();
    Ok(compress_log_rows(
        bundle.letter_id().to_owned(),
        line_ids,
        cols,
        &log_probs,
        bundle.boundaries(),
        |t| blank[t],
    ))
}

fn compress_log_rows(
    letter_id: String,
    line_ids: Vec<String>,
    cols: usize,
    log_probs: &[f64],
    boundaries: &[usize],
    is_blank: impl Fn(usize) -> bool,
) -> CompressedSequence {
    let raw_steps = boundaries.last().copied().unwrap_or(0);
    let mut out = Vec::with_capacity(log_probs.len());
    let mut origin_spans = Vec::new();
    let mut line_of_step = Vec::new();
    let mut line_ranges = Vec::with_capacity(boundaries.len());
    let mut start = 0;
    for (line, &end) in boundaries.iter().enumerate() {
        let first = origin_spans.len();
        let mut t = start;
        while t < end {
            let mut run_end = t + 1;
            if is_blank(t) {
                while run_end < end && is_blank(run_end) {
                    run_end += 1;
                }
            }
            let base = out.len();
            out.extend_from_slice(&log_probs[t * cols..(t + 1) * cols]);
            for j in t + 1..run_end {
                for (acc, &v) in out[base..]
                    .iter_mut()
                    .zip(&log_probs[j * cols..(j + 1) * cols])
                {
                    *acc += v;
                }
            }
            origin_spans.push(t..run_end);
            line_of_step.push(line);
            t = run_end;
        }
        line_ranges.push(first..origin_spans.len());
        start = end;
    }
    CompressedSequence {
        letter_id,
        line_ids,
        cols,
        raw_steps,
        log_probs: out,
        origin_spans,
        line_of_step,
        line_ranges,
    }
}

/// Length summary of one letter before and after compression.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CompressionStats {
    pub avg_line_steps: f64,
    pub raw_letter_steps: usize,
    pub compressed_letter_steps: usize,
    pub ratio: f64,
}

pub fn compression_stats(
    bundle: &LetterBundle,
    compressed: &CompressedSequence,
) -> CompressionStats {
    CompressionStats {
        avg_line_steps: bundle.total_steps() as f64 / bundle.lines().len() as f64,
        raw_letter_steps: bundle.total_steps(),
        compressed_letter_steps: compressed.steps(),
        ratio: compressed.compression_ratio(),
    }
}

#[cfg(test)]
mod tests {
    use super::super::{concatenate, PosteriorMatrix};
    use super::*;

    fn line(id: &str, rows: &[[f32; 3]]) -> PosteriorMatrix {
        let rows: Vec<Vec<f32>> = rows.iter().map(|r| r.to_vec()).collect();
        PosteriorMatrix::from_rows(id, &rows).unwrap()
    }

    #[test]
    fn nothing_to_compress() {
        let b = concatenate("l", vec![line("a", &[[0.5, 0.5, 0.0], [0.2, 0.0, 0.8]])]).unwrap();
        let c = epsilon_compress(&b, 0.99).unwrap();
        assert_eq!(c.steps(), 2);
        assert_eq!(c.compression_ratio(), 1.0);
        assert_eq!(c.prob(1, 2), f64::from(0.8f32));
    }

    #[test]
    fn three_step_run_becomes_product() {
        let r = [0.999, 0.001, 0.0];
        let b = concatenate("l", vec![line("a", &[r, r, r])]).unwrap();
        let c = epsilon_compress(&b, 0.99).unwrap();
        assert_eq!(c.steps(), 1);
        assert_eq!(c.origin_spans(), std::slice::from_ref(&(0..3)));
        let expected = f64::from(0.999f32).powi(3);
        assert!((c.prob(0, 0) - expected).abs() < 1e-12);
        assert!((expected - 0.997002999).abs() < 1e-7);
        assert_eq!(c.log_prob(0, 2), f64::NEG_INFINITY);
    }

    #[test]
    fn runs_stop_at_line_boundaries() {
        let e = [1.0, 0.0, 0.0];
        let b = concatenate("l", vec![line("a", &[e, e]), line("b", &[e, e, e])]).unwrap();
        let c = epsilon_compress(&b, 0.99).unwrap();
        assert_eq!(c.origin_spans(), &[0..2, 2..5]);
        assert_eq!(c.line_of_step(), &[0, 1]);
        assert_eq!(c.line_range(1), 1..2);
    }

    #[test]
    fn stats_without_compression() {
        let x = [0.5, 0.5, 0.0];
        let b = concatenate("l", vec![line("a", &[x; 10]), line("b", &[x; 10])]).unwrap();
        let c = epsilon_compress(&b, 0.99).unwrap();
        let s = compression_stats(&b, &c);
        assert_eq!(
            s,
            CompressionStats {
                avg_line_steps: 10.0,
                raw_letter_steps: 20,
                compressed_letter_steps: 20,
                ratio: 1.0
            }
        );
    }

    #[test]
    fn all_blank_letter_collapses_to_one_step() {
        let b = concatenate("l", vec![line("a", &[[1.0, 0.0, 0.0]; 100])]).unwrap();
        let c = epsilon_compress(&b, 0.99).unwrap();
        let s = compression_stats(&b, &c);
        assert_eq!(s.compressed_letter_steps, 1);
        assert_eq!(s.ratio, 100.0);
        assert_eq!(c.prob(0, 0), 1.0);
    }

    #[test]
    fn table_scale_ratios() {
        // Ratio arithmetic for the letter lengths reported for two recognizers.
        assert!((11242.0f64 / 6897.0 - 1.63).abs() < 5e-3);
        assert!((8915.0f64 / 5643.0 - 1.58).abs() < 5e-3);
    }

    #[test]
    fn theta_must_be_open_unit_interval() {
        let b = concatenate("l", vec![line("a", &[[1.0, 0.0, 0.0]])]).unwrap();
        for theta in [0.0, 1.0, -0.5, 1.5, f64::NAN] {
            assert!(matches!(
                epsilon_compress(&b, theta),
                Err(PosteriorError::Threshold(_))
            ));
        }
    }
}
