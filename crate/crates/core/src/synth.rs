//! Synthetic CTC-like posteriors and an exhaustive alignment oracle, for
//! testing the pipeline without a trained recognizer.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::aligner::PathSolution;
use crate::fsa::{build_fsa, enumerate_paths, FsaError, Transcription};
use crate::metrics::LineSet;
use crate::posteriors::{
    concatenate, epsilon_compress, write_matrix, Alphabet, LetterBundle, LetterManifest,
    ManifestLine, PosteriorError, PosteriorMatrix, EPSILON_INDEX,
};

/// Name of the generator behind `seed`, recorded next to generated data.
pub const GENERATOR: &str = "ChaCha8Rng (rand_chacha 0.9), seed_from_u64";

#[derive(Debug, thiserror::Error)]
pub enum SynthError {
    #[error("invalid synthesis spec: {0}")]
    Spec(String),
    #[error("character {ch:?} in line {line} is not in the alphabet")]
    UnknownSymbol { ch: char, line: usize },
    #[error(transparent)]
    Posterior(#[from] PosteriorError),
    #[error(transparent)]
    Fsa(#[from] FsaError),
    #[error("no accepted path of length {0}")]
    NoPath(usize),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn default_letter_id() -> String {
    "synthetic".into()
}

/// What the "image" of each line shows. A line ending at a word boundary
/// carries its trailing space, so concatenating the lines gives the letter
/// transcription.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    #[serde(default = "default_letter_id")]
    pub letter_id: String,
    pub lines: Vec<String>,
    pub steps_per_char: usize,
    pub epsilon_run: usize,
    pub noise: f64,
    pub seed: u64,
    /// Pads every line with trailing ε steps to this fixed width.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub line_steps: Option<usize>,
}

impl SynthSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        if !(0.0..1.0).contains(&self.noise) {
            return Err(SynthError::Spec(format!(
                "noise {} outside [0, 1)",
                self.noise
            )));
        }
        if self.steps_per_char == 0 || self.epsilon_run == 0 {
            return Err(SynthError::Spec(
                "steps_per_char and epsilon_run must be at least 1".into(),
            ));
        }
        if self.lines.is_empty() {
            return Err(SynthError::Spec("no lines".into()));
        }
        if let Some(width) = self.line_steps {
            for (i, line) in self.lines.iter().enumerate() {
                let need = self.content_steps(line) + 1;
                if need > width {
                    return Err(SynthError::Spec(format!(
                        "line {i} needs {need} steps, line_steps is {width}"
                    )));
                }
            }
        }
        Ok(())
    }

    fn content_steps(&self, line: &str) -> usize {
        line.chars().count() * (self.epsilon_run + self.steps_per_char)
    }

    /// The letter transcription: all lines concatenated.
    pub fn transcription(&self) -> String {
        self.lines.concat()
    }

    /// Line texts an exact alignment yields: one trailing whitespace
    /// character is dropped from every line but the last.
    pub fn expected_lines(&self) -> Vec<String> {
        let last = self.lines.len() - 1;
        self.lines
            .iter()
            .enumerate()
            .map(|(k, l)| match l.chars().last() {
                Some(c) if k < last && c.is_whitespace() => l[..l.len() - c.len_utf8()].to_owned(),
                _ => l.clone(),
            })
            .collect()
    }

    pub fn line_id(&self, k: usize) -> String {
        format!("{}_l{k:03}", self.letter_id)
    }

    pub fn ground_truth(&self) -> LineSet {
        LineSet {
            letter_id: self.letter_id.clone(),
            lines: self.expected_lines(),
        }
    }

    /// Smallest alphabet covering every line character.
    pub fn alphabet(&self) -> Result<Alphabet, SynthError> {
        let chars: BTreeSet<char> = self.lines.iter().flat_map(|l| l.chars()).collect();
        Ok(Alphabet::from_chars(chars)?)
    }
}

/// Peaked posteriors: per character, `epsilon_run` ε steps followed by
/// `steps_per_char` character steps, then a trailing ε run. The target gets
/// `1 - noise`; the rest is spread over the other symbols with random weights.
pub fn generate_posteriors(
    spec: &SynthSpec,
    alphabet: &Alphabet,
) -> Result<LetterBundle, SynthError> {
    spec.validate()?;
    let cols = alphabet.len();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut weights = vec![0.0f64; cols];
    let mut row = |target: usize, out: &mut Vec<f32>| {
        if spec.noise == 0.0 {
            out.extend((0..cols).map(|c| if c == target { 1.0f32 } else { 0.0 }));
            return;
        }
        let mut total = 0.0;
        for (c, w) in weights.iter_mut().enumerate() {
            *w = if c == target {
                0.0
            } else {
                rng.random::<f64>() + 1e-12
            };
            total += *w;
        }
        out.extend((0..cols).map(|c| {
            let p = if c == target {
                1.0 - spec.noise
            } else {
                spec.noise * weights[c] / total
            };
            p as f32
        }));
    };

    let mut matrices = Vec::with_capacity(spec.lines.len());
    for (k, line) in spec.lines.iter().enumerate() {
        let mut probs = Vec::new();
        for ch in line.chars() {
            let sym = alphabet
                .index_of(ch)
                .ok_or(SynthError::UnknownSymbol { ch, line: k })?;
            for _ in 0..spec.epsilon_run {
                row(EPSILON_INDEX, &mut probs);
            }
            for _ in 0..spec.steps_per_char {
                row(sym, &mut probs);
            }
        }
        let trailing = match spec.line_steps {
            Some(width) => width - spec.content_steps(line),
            None => spec.epsilon_run,
        };
        for _ in 0..trailing {
            row(EPSILON_INDEX, &mut probs);
        }
        matrices.push(PosteriorMatrix::new(spec.line_id(k), cols, probs)?);
    }
    Ok(concatenate(spec.letter_id.clone(), matrices)?)
}

/// Exhaustive maximum over every accepted path of the compressed letter.
/// Ties keep the lexicographically smallest state sequence.
pub fn brute_force_align(
    bundle: &LetterBundle,
    transcription: &Transcription,
    alphabet: &Alphabet,
    theta: f64,
) -> Result<PathSolution, SynthError> {
    let compressed = epsilon_compress(bundle, theta)?;
    let fsa = build_fsa(transcription, alphabet)?;
    let steps = compressed.steps();
    let symbols: Vec<usize> = fsa.states().iter().map(|s| s.symbol).collect();
    let mut best: Option<(f64, Vec<usize>)> = None;
    for path in enumerate_paths(&fsa, steps)? {
        let score = path
            .iter()
            .enumerate()
            .fold(0.0, |acc, (t, &s)| acc + compressed.log_prob(t, symbols[s]));
        if best.as_ref().is_none_or(|(b, _)| score > *b) {
            best = Some((score, path));
        }
    }
    let (log_prob, states) = best.ok_or(SynthError::NoPath(steps))?;
    let per_step_prob = states
        .iter()
        .enumerate()
        .map(|(t, &s)| compressed.prob(t, symbols[s]))
        .collect();
    Ok(PathSolution {
        states,
        log_prob,
        per_step_prob,
    })
}

#[derive(Debug, Clone, Serialize)]
struct SynthMetadata<'a> {
    generator: &'a str,
    seed: u64,
    spec: &'a SynthSpec,
}

/// Writes a generated letter: alphabet, one `CTCP` file per line, the letter
/// manifest, the transcription, the expected line texts and generator
/// metadata. Returns the manifest path.
pub fn write_letter(
    dir: &Path,
    spec: &SynthSpec,
    alphabet: &Alphabet,
    bundle: &LetterBundle,
) -> Result<PathBuf, SynthError> {
    let io = |path: &Path| {
        let path = path.to_owned();
        move |source| SynthError::Io { path, source }
    };
    std::fs::create_dir_all(dir).map_err(io(dir))?;
    let alphabet_path = dir.join("alphabet.txt");
    std::fs::write(&alphabet_path, alphabet.to_file_string()).map_err(io(&alphabet_path))?;

    let mut lines = Vec::with_capacity(bundle.lines().len());
    for m in bundle.lines() {
        let name = format!("{}.ctcp", m.line_id());
        let path = dir.join(&name);
        let mut buf = Vec::new();
        write_matrix(&mut buf, m).map_err(io(&path))?;
        std::fs::write(&path, buf).map_err(io(&path))?;
        lines.push(ManifestLine {
            line_id: m.line_id().to_owned(),
            matrix: name.into(),
        });
    }
    let manifest = LetterManifest {
        letter_id: bundle.letter_id().to_owned(),
        alphabet: "alphabet.txt".into(),
        lines,
    };
    let write_json = |name: &str, value: String| {
        let path = dir.join(name);
        std::fs::write(&path, value)
            .map_err(io(&path))
            .map(|_| path)
    };
    let manifest_path = write_json(
        "manifest.json",
        serde_json::to_string_pretty(&manifest).expect("manifest serializes"),
    )?;
    write_json("transcription.txt", spec.transcription())?;
    write_json(
        "ground_truth.json",
        serde_json::to_string_pretty(&spec.ground_truth()).expect("line set serializes"),
    )?;
    write_json(
        "synth.json",
        serde_json::to_string_pretty(&SynthMetadata {
            generator: GENERATOR,
            seed: spec.seed,
            spec,
        })
        .expect("metadata serializes"),
    )?;
    Ok(manifest_path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aligner::align_letter;
    use crate::posteriors::epsilon_compress;

    fn spec(lines: &[&str], noise: f64, seed: u64) -> SynthSpec {
        SynthSpec {
            letter_id: "s".into(),
            lines: lines.iter().map(|s| s.to_string()).collect(),
            steps_per_char: 2,
            epsilon_run: 2,
            noise,
            seed,
            line_steps: None,
        }
    }

    fn round_trip(s: &SynthSpec) -> Vec<(String, f64)> {
        let a = s.alphabet().unwrap();
        let bundle = generate_posteriors(s, &a).unwrap();
        let c = epsilon_compress(&bundle, 0.99).unwrap();
        let t = Transcription::new(&s.transcription()).unwrap();
        let fsa = build_fsa(&t, &a).unwrap();
        let r = align_letter(&c, &fsa).unwrap();
        r.lines.into_iter().map(|l| (l.text, l.gamma)).collect()
    }

    #[test]
    fn noiseless_round_trip() {
        assert_eq!(
            round_trip(&spec(&["ab"], 0.0, 1)),
            [("ab".to_string(), 1.0)]
        );
    }

    #[test]
    fn noiseless_mid_word_split() {
        let got = round_trip(&spec(&["stipen", "dio"], 0.0, 1));
        assert_eq!(got, [("stipen".to_string(), 1.0), ("dio".to_string(), 1.0)]);
    }

    #[test]
    fn boundary_space_and_gap_lines() {
        let s = spec(&["ab ", "", "cd"], 0.0, 1);
        assert_eq!(s.expected_lines(), ["ab", "", "cd"]);
        let texts: Vec<String> = round_trip(&s).into_iter().map(|(t, _)| t).collect();
        assert_eq!(texts, s.expected_lines());
    }

    #[test]
    fn fixed_seed_is_deterministic() {
        let s = spec(&["hello ", "world"], 0.1, 42);
        let a = s.alphabet().unwrap();
        let x = generate_posteriors(&s, &a).unwrap();
        let y = generate_posteriors(&s, &a).unwrap();
        assert_eq!(x, y);
        let z = generate_posteriors(
            &SynthSpec {
                seed: 43,
                ..s.clone()
            },
            &a,
        )
        .unwrap();
        assert_ne!(x, z);
    }

    #[test]
    fn fixed_line_width() {
        let s = SynthSpec {
            line_steps: Some(256),
            ..spec(&["abc ", "de"], 0.005, 3)
        };
        let b = generate_posteriors(&s, &s.alphabet().unwrap()).unwrap();
        assert_eq!(b.boundaries(), &[256, 512]);
        let too_narrow = SynthSpec {
            line_steps: Some(8),
            ..s
        };
        assert!(matches!(too_narrow.validate(), Err(SynthError::Spec(_))));
    }

    #[test]
    fn spec_validation() {
        assert!(spec(&["a"], 1.0, 0).validate().is_err());
        assert!(SynthSpec {
            steps_per_char: 0,
            ..spec(&["a"], 0.0, 0)
        }
        .validate()
        .is_err());
        let a = Alphabet::from_chars(['a']).unwrap();
        assert!(matches!(
            generate_posteriors(&spec(&["ab"], 0.0, 0), &a),
            Err(SynthError::UnknownSymbol { ch: 'b', line: 0 })
        ));
    }

    #[test]
    fn brute_force_single_step() {
        let a = Alphabet::from_chars(['a', 'b']).unwrap();
        let m = PosteriorMatrix::from_rows("l", &[vec![0.2, 0.7, 0.1]]).unwrap();
        let bundle = concatenate("x", vec![m]).unwrap();
        let t = Transcription::new("a").unwrap();
        let p = brute_force_align(&bundle, &t, &a, 0.99).unwrap();
        assert_eq!(p.states, [1]);
        assert_eq!(p.log_prob, f64::from(0.7f32).ln());
    }

    #[test]
    fn brute_force_three_steps() {
        // Accepted length-3 paths of "ab": [ε0,a,b], [a,a,b], [a,ε1,b],
        // [a,b,b], [a,b,ε2]. Scores by hand from the matrix below.
        let a = Alphabet::from_chars(['a', 'b']).unwrap();
        let rows = [
            vec![0.5f32, 0.4, 0.1],
            vec![0.3, 0.3, 0.4],
            vec![0.6, 0.1, 0.3],
        ];
        let bundle =
            concatenate("x", vec![PosteriorMatrix::from_rows("l", &rows).unwrap()]).unwrap();
        let t = Transcription::new("ab").unwrap();
        let p = brute_force_align(&bundle, &t, &a, 0.99).unwrap();
        let lp = |t: usize, c: usize| f64::from(rows[t][c]).ln();
        let candidates = [
            (vec![0, 1, 3], lp(0, 0) + lp(1, 1) + lp(2, 2)),
            (vec![1, 1, 3], lp(0, 1) + lp(1, 1) + lp(2, 2)),
            (vec![1, 2, 3], lp(0, 1) + lp(1, 0) + lp(2, 2)),
            (vec![1, 3, 3], lp(0, 1) + lp(1, 2) + lp(2, 2)),
            (vec![1, 3, 4], lp(0, 1) + lp(1, 2) + lp(2, 0)),
        ];
        let fsa = build_fsa(&t, &a).unwrap();
        let listed = enumerate_paths(&fsa, 3).unwrap();
        assert_eq!(listed.len(), candidates.len());
        let (best_states, best_score) = candidates
            .iter()
            .max_by(|x, y| x.1.partial_cmp(&y.1).unwrap())
            .unwrap();
        // [a, b, ε2]: 0.4 * 0.4 * 0.6 = 0.096 is the maximum.
        assert_eq!(best_states, &vec![1, 3, 4]);
        assert_eq!(p.states, *best_states);
        assert!((p.log_prob - best_score).abs() < 1e-12);
    }
}
