//! Confidence filtering of alignments into training manifests for
//! self-training, and the bookkeeping between rounds.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::aligner::{AlignedLine, AlignmentResult};

#[derive(Debug, thiserror::Error)]
pub enum FilterError {
    #[error("threshold {0} outside [0, 1]")]
    Threshold(f64),
    #[error("manifest line {line}: {source}")]
    Parse {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("manifest has no header record")]
    MissingHeader,
}

/// Which per-line confidence drives filtering.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Measure {
    #[default]
    Gamma6,
    Gamma,
}

impl Measure {
    pub fn of(self, line: &AlignedLine) -> f64 {
        match self {
            Measure::Gamma6 => line.gamma6,
            Measure::Gamma => line.gamma,
        }
    }
}

impl std::str::FromStr for Measure {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "gamma6" => Ok(Measure::Gamma6),
            "gamma" => Ok(Measure::Gamma),
            other => Err(format!("unknown confidence measure {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterSpec {
    pub threshold: f64,
    #[serde(default)]
    pub measure: Measure,
}

impl FilterSpec {
    pub fn new(threshold: f64, measure: Measure) -> Result<Self, FilterError> {
        if !(0.0..=1.0).contains(&threshold) {
            return Err(FilterError::Threshold(threshold));
        }
        Ok(Self { threshold, measure })
    }

    /// Strictly above the threshold, with non-empty text.
    pub fn keeps(&self, line: &AlignedLine) -> bool {
        !line.text.is_empty() && self.measure.of(line) > self.threshold
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub letter_id: String,
    pub line_id: String,
    pub text: String,
    pub gamma: f64,
    pub gamma6: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceRef {
    pub letter_id: String,
    /// Content hash of the alignment, runtime excluded.
    pub hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    iteration: u32,
    filter: FilterSpec,
    sources: Vec<SourceRef>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingManifest {
    pub iteration: u32,
    pub filter: FilterSpec,
    pub sources: Vec<SourceRef>,
    pub entries: Vec<ManifestEntry>,
}

impl TrainingManifest {
    /// JSON Lines: a header record, then one record per kept line.
    pub fn to_jsonl(&self) -> String {
        let header = Header {
            iteration: self.iteration,
            filter: self.filter,
            sources: self.sources.clone(),
        };
        let mut out = serde_json::to_string(&header).expect("header serializes");
        out.push('\n');
        for e in &self.entries {
            out.push_str(&serde_json::to_string(e).expect("entry serializes"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self, FilterError> {
        let mut records = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty());
        let (i, first) = records.next().ok_or(FilterError::MissingHeader)?;
        let header: Header = serde_json::from_str(first).map_err(|source| FilterError::Parse {
            line: i + 1,
            source,
        })?;
        let entries = records
            .map(|(i, l)| {
                serde_json::from_str(l).map_err(|source| FilterError::Parse {
                    line: i + 1,
                    source,
                })
            })
            .collect::<Result<_, _>>()?;
        Ok(Self {
            iteration: header.iteration,
            filter: header.filter,
            sources: header.sources,
            entries,
        })
    }
}

/// Keeps every non-gap line whose confidence is strictly above the
/// threshold, in input order.
pub fn filter_alignments(results: &[AlignmentResult], spec: FilterSpec) -> TrainingManifest {
    let mut entries = Vec::new();
    for r in results {
        for line in r.lines.iter().filter(|l| spec.keeps(l)) {
            entries.push(ManifestEntry {
                letter_id: r.letter_id.clone(),
                line_id: line.line_id.clone(),
                text: line.text.clone(),
                gamma: line.gamma,
                gamma6: line.gamma6,
            });
        }
    }
    TrainingManifest {
        iteration: 0,
        filter: spec,
        sources: results
            .iter()
            .map(|r| SourceRef {
                letter_id: r.letter_id.clone(),
                hash: r.content_hash(),
            })
            .collect(),
        entries,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub threshold: f64,
    pub kept_count: usize,
}

/// Kept-line counts for each threshold, in the given order.
pub fn threshold_sweep(
    results: &[AlignmentResult],
    thresholds: &[f64],
    measure: Measure,
) -> Vec<SweepRow> {
    thresholds
        .iter()
        .map(|&threshold| {
            let spec = FilterSpec { threshold, measure };
            let kept_count = results
                .iter()
                .flat_map(|r| &r.lines)
                .filter(|l| spec.keeps(l))
                .count();
            SweepRow {
                threshold,
                kept_count,
            }
        })
        .collect()
}

/// Lines entering, leaving, or changing text between two rounds, keyed by
/// (letter id, line id).
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ManifestDiff {
    pub added: Vec<(String, String)>,
    pub removed: Vec<(String, String)>,
    pub modified: Vec<(String, String)>,
}

/// Filters the next round's alignments and reports the change against the
/// previous manifest.
pub fn iteration_step(
    previous: &TrainingManifest,
    new_results: &[AlignmentResult],
    spec: FilterSpec,
) -> (TrainingManifest, ManifestDiff) {
    let mut next = filter_alignments(new_results, spec);
    next.iteration = previous.iteration + 1;

    let key = |e: &ManifestEntry| (e.letter_id.clone(), e.line_id.clone());
    let before: BTreeMap<_, _> = previous.entries.iter().map(|e| (key(e), e)).collect();
    let after: BTreeMap<_, _> = next.entries.iter().map(|e| (key(e), e)).collect();
    let mut diff = ManifestDiff::default();
    for (k, e) in &after {
        match before.get(k) {
            None => diff.added.push(k.clone()),
            Some(old) if old.text != e.text => diff.modified.push(k.clone()),
            Some(_) => {}
        }
    }
    diff.removed = before
        .keys()
        .filter(|k| !after.contains_key(*k))
        .cloned()
        .collect();
    (next, diff)
}
