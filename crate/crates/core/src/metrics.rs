//! Evaluation metrics for line-aligned text: line-level accuracy, CER, WER
//! and the boundary error rate CER_n over the first and last `n` characters.
//!
//! Edit distances count Unicode scalar values with unit costs. Rates are
//! normalized by the ground truth and corpus figures are micro-averaged.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::aligner::AlignmentResult;
use crate::filter::Measure;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MetricError {
    #[error("{0} is undefined for an empty ground truth")]
    Undefined(&'static str),
    #[error("letter {0} is missing from the predictions")]
    MissingPrediction(String),
    #[error("letter {0} has no ground truth")]
    UnexpectedPrediction(String),
    #[error("boundary width must be at least 1")]
    ZeroWidth,
}

/// Lines of one letter in reading order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LineSet {
    pub letter_id: String,
    pub lines: Vec<String>,
}

impl From<&AlignmentResult> for LineSet {
    fn from(r: &AlignmentResult) -> Self {
        LineSet {
            letter_id: r.letter_id.clone(),
            lines: r.lines.iter().map(|l| l.text.clone()).collect(),
        }
    }
}

/// Unit-cost edit distance.
pub fn levenshtein<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    if a.is_empty() {
        return b.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, x) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(x != y);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

fn scalars(s: &str) -> Vec<char> {
    s.chars().collect()
}

fn words(s: &str) -> Vec<&str> {
    s.split_whitespace().collect()
}

pub fn cer(gt: &str, pred: &str) -> Result<f64, MetricError> {
    let g = scalars(gt);
    if g.is_empty() {
        return Err(MetricError::Undefined("CER"));
    }
    Ok(levenshtein(&g, &scalars(pred)) as f64 / g.len() as f64)
}

pub fn wer(gt: &str, pred: &str) -> Result<f64, MetricError> {
    let g = words(gt);
    if g.is_empty() {
        return Err(MetricError::Undefined("WER"));
    }
    Ok(levenshtein(&g, &words(pred)) as f64 / g.len() as f64)
}

/// Edits and normalizer of the boundary windows: the first and the last
/// `n` characters are compared separately, each clamped to string length.
fn boundary_edits(gt: &[char], pred: &[char], n: usize) -> (usize, usize) {
    let head = |s: &[char]| s.len().min(n);
    let g_head = &gt[..head(gt)];
    let p_head = &pred[..head(pred)];
    let g_tail = &gt[gt.len() - head(gt)..];
    let p_tail = &pred[pred.len() - head(pred)..];
    (
        levenshtein(g_head, p_head) + levenshtein(g_tail, p_tail),
        2 * head(gt),
    )
}

/// Character error rate restricted to the first and last `n` characters.
pub fn cer_n(gt: &str, pred: &str, n: usize) -> Result<f64, MetricError> {
    if n == 0 {
        return Err(MetricError::ZeroWidth);
    }
    let g = scalars(gt);
    if g.is_empty() {
        return Err(MetricError::Undefined("CER_n"));
    }
    let (edits, denom) = boundary_edits(&g, &scalars(pred), n);
    Ok(edits as f64 / denom as f64)
}

fn same_line(gt: &str, pred: &str) -> bool {
    gt.trim_end() == pred.trim_end()
}

/// Pairs every ground-truth letter with its prediction by letter id.
fn pair_letters<'a>(
    gt: &'a [LineSet],
    pred: &'a [LineSet],
) -> Result<Vec<(&'a LineSet, &'a LineSet)>, MetricError> {
    let by_id: HashMap<&str, &LineSet> = pred.iter().map(|p| (p.letter_id.as_str(), p)).collect();
    let gt_ids: HashMap<&str, ()> = gt.iter().map(|g| (g.letter_id.as_str(), ())).collect();
    if let Some(extra) = pred
        .iter()
        .find(|p| !gt_ids.contains_key(p.letter_id.as_str()))
    {
        return Err(MetricError::UnexpectedPrediction(extra.letter_id.clone()));
    }
    gt.iter()
        .map(|g| {
            by_id
                .get(g.letter_id.as_str())
                .map(|p| (g, *p))
                .ok_or_else(|| MetricError::MissingPrediction(g.letter_id.clone()))
        })
        .collect()
}

/// Index-matched lines equal after trimming trailing whitespace, and the
/// number of ground-truth lines. Lines past the shorter list never match.
pub fn matched_lines(gt: &LineSet, pred: &LineSet) -> (usize, usize) {
    let matched = gt
        .lines
        .iter()
        .zip(&pred.lines)
        .filter(|(g, p)| same_line(g, p))
        .count();
    (matched, gt.lines.len())
}

/// Fraction of ground-truth lines reproduced exactly at the same index,
/// summed over letters before dividing.
pub fn line_level_accuracy(gt: &[LineSet], pred: &[LineSet]) -> Result<f64, MetricError> {
    let (matched, total) = pair_letters(gt, pred)?
        .into_iter()
        .map(|(g, p)| matched_lines(g, p))
        .fold((0, 0), |(m, t), (dm, dt)| (m + dm, t + dt));
    if total == 0 {
        return Err(MetricError::Undefined("line-level accuracy"));
    }
    Ok(matched as f64 / total as f64)
}

/// Raw edit counts of one or more line pairs; sums micro-average.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EditCounts {
    pub gt_lines: usize,
    pub matched_lines: usize,
    pub edit_ops: usize,
    pub gt_chars: usize,
    pub word_edit_ops: usize,
    pub gt_words: usize,
    pub boundary_edit_ops: usize,
    pub boundary_chars: usize,
}

impl std::ops::AddAssign for EditCounts {
    fn add_assign(&mut self, o: Self) {
        self.gt_lines += o.gt_lines;
        self.matched_lines += o.matched_lines;
        self.edit_ops += o.edit_ops;
        self.gt_chars += o.gt_chars;
        self.word_edit_ops += o.word_edit_ops;
        self.gt_words += o.gt_words;
        self.boundary_edit_ops += o.boundary_edit_ops;
        self.boundary_chars += o.boundary_chars;
    }
}

/// Counts for a single ground-truth/prediction line pair.
pub fn line_counts(gt: &str, pred: &str, n: usize) -> EditCounts {
    let (g, p) = (scalars(gt), scalars(pred));
    let (gw, pw) = (words(gt), words(pred));
    let (boundary_edit_ops, boundary_chars) = boundary_edits(&g, &p, n.max(1));
    EditCounts {
        gt_lines: 1,
        matched_lines: usize::from(same_line(gt, pred)),
        edit_ops: levenshtein(&g, &p),
        gt_chars: g.len(),
        word_edit_ops: levenshtein(&gw, &pw),
        gt_words: gw.len(),
        boundary_edit_ops,
        boundary_chars,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub line_accuracy: Option<f64>,
    pub cer: Option<f64>,
    pub wer: Option<f64>,
    pub cer_n: Option<f64>,
    pub n: usize,
    pub counts: EditCounts,
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// Micro-averaged report: total edits over total ground-truth length.
pub fn aggregate<I: IntoIterator<Item = EditCounts>>(counts: I, n: usize) -> MetricsReport {
    let mut total = EditCounts::default();
    for c in counts {
        total += c;
    }
    MetricsReport {
        line_accuracy: ratio(total.matched_lines, total.gt_lines),
        cer: ratio(total.edit_ops, total.gt_chars),
        wer: ratio(total.word_edit_ops, total.gt_words),
        cer_n: ratio(total.boundary_edit_ops, total.boundary_chars),
        n,
        counts: total,
    }
}

/// Edit counts of one letter. Lines are paired by index; a missing line on
/// either side is compared against the empty string, but lines beyond the
/// ground truth never count towards `gt_lines`.
pub fn letter_counts(gt: &LineSet, pred: &LineSet, n: usize) -> EditCounts {
    let mut total = EditCounts::default();
    for j in 0..gt.lines.len().max(pred.lines.len()) {
        let g = gt.lines.get(j).map_or("", String::as_str);
        let p = pred.lines.get(j).map_or("", String::as_str);
        let mut c = line_counts(g, p, n);
        if j >= gt.lines.len() {
            c.gt_lines = 0;
            c.matched_lines = 0;
        } else if j >= pred.lines.len() {
            c.matched_lines = 0;
        }
        total += c;
    }
    total
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LetterReport {
    pub letter_id: String,
    #[serde(flatten)]
    pub report: MetricsReport,
}

/// Corpus report plus the per-letter breakdown, in ground-truth order.
pub fn evaluate(
    gt: &[LineSet],
    pred: &[LineSet],
    n: usize,
) -> Result<(MetricsReport, Vec<LetterReport>), MetricError> {
    if n == 0 {
        return Err(MetricError::ZeroWidth);
    }
    let per_letter: Vec<(String, EditCounts)> = pair_letters(gt, pred)?
        .into_iter()
        .map(|(g, p)| (g.letter_id.clone(), letter_counts(g, p, n)))
        .collect();
    let corpus = aggregate(per_letter.iter().map(|(_, c)| *c), n);
    let letters = per_letter
        .into_iter()
        .map(|(letter_id, c)| LetterReport {
            letter_id,
            report: aggregate([c], n),
        })
        .collect();
    Ok((corpus, letters))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceBucket {
    pub bucket_low: f64,
    pub bucket_high: f64,
    pub line_accuracy: Option<f64>,
    pub count: usize,
}

/// Line-level accuracy of aligned lines grouped into confidence buckets of
/// the given width. A confidence of exactly 1 falls into the last bucket.
pub fn confidence_buckets(
    results: &[AlignmentResult],
    gt: &[LineSet],
    width: f64,
    measure: Measure,
) -> Result<Vec<ConfidenceBucket>, MetricError> {
    let buckets = (1.0 / width).round().max(1.0) as usize;
    let mut hits = vec![(0usize, 0usize); buckets];
    let pred: Vec<LineSet> = results.iter().map(LineSet::from).collect();
    let by_id: HashMap<&str, &AlignmentResult> =
        results.iter().map(|r| (r.letter_id.as_str(), r)).collect();
    for (g, _) in pair_letters(gt, &pred)? {
        let result = by_id[g.letter_id.as_str()];
        for (j, line) in result.lines.iter().enumerate() {
            let conf = measure.of(line);
            let b = ((conf / width).floor() as usize).min(buckets - 1);
            hits[b].1 += 1;
            if g.lines.get(j).is_some_and(|gl| same_line(gl, &line.text)) {
                hits[b].0 += 1;
            }
        }
    }
    Ok(hits
        .into_iter()
        .enumerate()
        .map(|(b, (ok, count))| ConfidenceBucket {
            bucket_low: b as f64 * width,
            bucket_high: ((b + 1) as f64 * width).min(1.0),
            line_accuracy: ratio(ok, count),
            count,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(id: &str, lines: &[&str]) -> LineSet {
        LineSet {
            letter_id: id.into(),
            lines: lines.iter().map(|s| s.to_string()).collect(),
        }
    }

    #[test]
    fn identical_sets_are_fully_accurate() {
        let g = vec![set("a", &["x y", "z"]), set("b", &["w"])];
        assert_eq!(line_level_accuracy(&g, &g).unwrap(), 1.0);
    }

    #[test]
    fn one_wrong_line_of_four() {
        let g = vec![set("a", &["l1", "l2", "l3", "l4"])];
        let p = vec![set("a", &["l1", "l2", "xx", "l4"])];
        assert_eq!(line_level_accuracy(&g, &p).unwrap(), 0.75);
    }

    #[test]
    fn fewer_predicted_lines_keep_denominator() {
        let g = vec![set("a", &["l1", "l2", "l3", "l4"])];
        let p = vec![set("a", &["l1", "l2"])];
        assert_eq!(line_level_accuracy(&g, &p).unwrap(), 0.5);
    }

    #[test]
    fn trailing_whitespace_ignored_case_is_not() {
        let g = vec![set("a", &["Foo", "bar"])];
        let p = vec![set("a", &["Foo  ", "Bar"])];
        assert_eq!(line_level_accuracy(&g, &p).unwrap(), 0.5);
    }

    #[test]
    fn letter_ids_must_match() {
        let g = vec![set("a", &["x"])];
        assert_eq!(
            line_level_accuracy(&g, &[set("b", &["x"])]),
            Err(MetricError::UnexpectedPrediction("b".into()))
        );
        assert_eq!(
            line_level_accuracy(&[set("a", &["x"]), set("c", &[])], &g),
            Err(MetricError::MissingPrediction("c".into()))
        );
    }

    #[test]
    fn cer_examples() {
        assert_eq!(cer("abc", "abc").unwrap(), 0.0);
        assert_eq!(cer("foo", "fou").unwrap(), 1.0 / 3.0);
        assert_eq!(cer("ab", "").unwrap(), 1.0);
        assert_eq!(cer("", "x"), Err(MetricError::Undefined("CER")));
        assert_eq!(levenshtein(b"kitten", b"sitting"), 3);
    }

    #[test]
    fn wer_examples() {
        assert_eq!(wer("a b c", "a b c").unwrap(), 0.0);
        assert_eq!(wer("a b c", "a x c").unwrap(), 1.0 / 3.0);
        assert_eq!(wer("a b", "a").unwrap(), 0.5);
        assert_eq!(wer("  ", "a"), Err(MetricError::Undefined("WER")));
    }

    #[test]
    fn cer_n_examples() {
        assert_eq!(cer_n("abcdefgh", "abcdefgh", 3).unwrap(), 0.0);
        assert_eq!(cer_n("abcdefgh", "Xbcdefgh", 2).unwrap(), 0.25);
        assert_eq!(cer_n("abc", "abd", 0), Err(MetricError::ZeroWidth));
        // Dropping the first word hurts the left window only.
        let gt = "status sit tibi cognoscetis ex";
        let pred = "sit tibi cognoscetis ex";
        let left = levenshtein(&scalars("status"), &scalars("sit ti"));
        assert!(left > 0);
        assert_eq!(cer_n(gt, pred, 6).unwrap(), left as f64 / 12.0);
    }

    #[test]
    fn micro_average() {
        let a = line_counts("abcdefghij", "abcdefghiX", 6);
        let b = line_counts(&"x".repeat(30), &"x".repeat(30), 6);
        assert_eq!(aggregate([a, b], 6).cer, Some(0.025));
        let c = line_counts("ab", "ab", 6);
        let d = line_counts("ab", "xy", 6);
        assert_eq!(aggregate([c, d], 6).cer, Some(0.5));
        assert_eq!(
            aggregate([a], 6).cer,
            Some(cer("abcdefghij", "abcdefghiX").unwrap())
        );
    }

    #[test]
    fn evaluate_counts_missing_lines() {
        let g = vec![set("a", &["ab", "cd"])];
        let p = vec![set("a", &["ab"])];
        let (report, letters) = evaluate(&g, &p, 6).unwrap();
        assert_eq!(report.line_accuracy, Some(0.5));
        assert_eq!(report.cer, Some(0.5));
        assert_eq!(letters.len(), 1);
        let empty = aggregate([], 6);
        assert_eq!(empty.cer, None);
    }
}
