//! Command-line front end. Exit codes: 0 success, 1 input error,
//! 2 infeasible alignment.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand};
use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aligner::{align_letter, AlignError, AlignmentResult};
use crate::filter::{
    filter_alignments, iteration_step, threshold_sweep, FilterSpec, Measure, TrainingManifest,
};
use crate::fsa::{build_fsa, Transcription};
use crate::metrics::{
    confidence_buckets, evaluate, ConfidenceBucket, LetterReport, LineSet, MetricsReport,
};
use crate::posteriors::{
    compression_stats, epsilon_compress, load_letter, Alphabet, CompressionStats,
};
use crate::synth::{generate_posteriors, write_letter, SynthSpec};

pub const DEFAULT_THETA: f64 = 0.99;

#[derive(Debug, Parser)]
#[command(
    name = "ctc-align",
    version,
    about = "Align letter transcriptions to CTC line posteriors"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Align letters and write line-level alignment JSON.
    Align(AlignArgs),
    /// Compare line sets: line-level accuracy, CER, WER, CER_n.
    Eval(EvalArgs),
    /// Filter alignments by confidence into a training manifest.
    Filter(FilterArgs),
    /// Generate synthetic posteriors from a spec file.
    Synth(SynthArgs),
    /// Report sequence lengths and compression ratios.
    Stats(StatsArgs),
}

#[derive(Debug, Args)]
pub struct Workers {
    /// Number of worker threads.
    #[arg(long, env = "CTC_ALIGN_WORKERS", default_value_t = 1,
          value_parser = clap::value_parser!(u16).range(1..))]
    pub workers: u16,
}

#[derive(Debug, Args)]
pub struct AlignArgs {
    /// Letter manifest; repeat for several letters.
    #[arg(long, required = true)]
    pub manifest: Vec<PathBuf>,
    /// Transcription text file, one per manifest, in the same order.
    #[arg(long, required = true)]
    pub transcription: Vec<PathBuf>,
    /// Output file, or output directory when aligning several letters.
    #[arg(long)]
    pub out: PathBuf,
    /// ε-compression threshold.
    #[arg(long, default_value_t = DEFAULT_THETA)]
    pub theta: f64,
    /// Write runtime_seconds as 0 so reruns are byte-identical.
    #[arg(long)]
    pub zero_runtime: bool,
    #[command(flatten)]
    pub workers: Workers,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Ground-truth line sets.
    #[arg(long)]
    pub gt: PathBuf,
    /// Predicted line sets or alignment outputs.
    #[arg(long)]
    pub pred: PathBuf,
    /// Boundary width for CER_n.
    #[arg(long, default_value_t = 6)]
    pub n: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Include one report per letter.
    #[arg(long)]
    pub per_letter: bool,
    /// Bucket width for the accuracy-per-confidence report (needs alignment outputs).
    #[arg(long)]
    pub buckets: Option<f64>,
    #[arg(long, default_value = "gamma6")]
    pub measure: Measure,
}

#[derive(Debug, Args)]
pub struct FilterArgs {
    /// Alignment files; glob patterns are expanded.
    #[arg(long, required = true)]
    pub alignments: Vec<String>,
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
    #[arg(long, default_value = "gamma6")]
    pub measure: Measure,
    /// Manifest output (JSON Lines).
    #[arg(long)]
    pub out: PathBuf,
    /// Print kept counts for thresholds start:end:step (end exclusive).
    #[arg(long)]
    pub sweep: Option<String>,
    /// Manifest of the previous self-training round.
    #[arg(long)]
    pub previous: Option<PathBuf>,
    #[command(flatten)]
    pub workers: Workers,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub spec: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Alphabet file; derived from the spec's lines when omitted.
    #[arg(long)]
    pub alphabet: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[arg(long, required = true)]
    pub manifest: Vec<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_THETA)]
    pub theta: f64,
}

#[derive(Debug)]
pub enum CliError {
    Input(anyhow::Error),
    Infeasible(anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Input(_) => 1,
            CliError::Infeasible(_) => 2,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Input(e) | CliError::Infeasible(e) => write!(f, "{e:#}"),
        }
    }
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        CliError::Input(e)
    }
}

type CliResult<T = ()> = Result<T, CliError>;

pub fn main_with(cli: Cli) -> ExitCode {
    let result = match cli.command {
        Command::Align(a) => cmd_align(&a),
        Command::Eval(a) => cmd_eval(&a),
        Command::Filter(a) => cmd_filter(&a),
        Command::Synth(a) => cmd_synth(&a),
        Command::Stats(a) => cmd_stats(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn pool(workers: &Workers) -> anyhow::Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(usize::from(workers.workers))
        .build()
        .context("building worker pool")
}

fn write_file(path: &Path, contents: &str) -> anyhow::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    std::fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("value serializes");
    s.push('\n');
    s
}

struct LetterOutcome {
    result: AlignmentResult,
    stats: CompressionStats,
}

fn align_one(manifest: &Path, transcription: &Path, theta: f64) -> CliResult<LetterOutcome> {
    let (alphabet, bundle) = load_letter(manifest)?;
    let text = std::fs::read_to_string(transcription)
        .with_context(|| format!("reading {}", transcription.display()))?;
    let transcription = Transcription::from_letter_text(text.trim_end_matches(['\n', '\r']));
    let fsa = build_fsa(&transcription, &alphabet)
        .with_context(|| format!("letter {}", bundle.letter_id()))?;
    let compressed = epsilon_compress(&bundle, theta)?;
    let stats = compression_stats(&bundle, &compressed);
    let result = align_letter(&compressed, &fsa).map_err(|e| {
        let input = matches!(e, AlignError::SymbolOutOfRange { .. });
        let e = anyhow::Error::new(e).context(format!("letter {}", bundle.letter_id()));
        if input {
            CliError::Input(e)
        } else {
            CliError::Infeasible(e)
        }
    })?;
    Ok(LetterOutcome { result, stats })
}

pub fn cmd_align(args: &AlignArgs) -> CliResult {
    if args.manifest.len() != args.transcription.len() {
        return Err(anyhow!(
            "{} manifests but {} transcriptions",
            args.manifest.len(),
            args.transcription.len()
        )
        .into());
    }
    let jobs: Vec<(&PathBuf, &PathBuf)> = args.manifest.iter().zip(&args.transcription).collect();
    let outcomes: Vec<CliResult<LetterOutcome>> = pool(&args.workers)?.install(|| {
        jobs.par_iter()
            .map(|(m, t)| align_one(m, t, args.theta))
            .collect()
    });

    let single = jobs.len() == 1;
    let mut worst: Option<CliError> = None;
    for outcome in outcomes {
        let mut outcome = match outcome {
            Ok(o) => o,
            Err(e) => {
                eprintln!("error: {e}");
                if worst.as_ref().is_none_or(|w| e.exit_code() < w.exit_code()) {
                    worst = Some(e);
                }
                continue;
            }
        };
        let r = &mut outcome.result;
        let s = outcome.stats;
        info!(
            "{}: {} lines, avg {:.1} steps/line, {} -> {} steps (ratio {:.3}), {:.3} s",
            r.letter_id,
            r.lines.len(),
            s.avg_line_steps,
            s.raw_letter_steps,
            s.compressed_letter_steps,
            s.ratio,
            r.runtime_seconds
        );
        if args.zero_runtime {
            r.runtime_seconds = 0.0;
        }
        let path = if single {
            args.out.clone()
        } else {
            args.out.join(format!("{}.json", r.letter_id))
        };
        write_file(&path, &to_json(r))?;
    }
    match worst {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum LineSource {
    Set(LineSet),
    Aligned(AlignmentResult),
}

#[derive(Deserialize)]
#[serde(untagged)]
enum LineFile {
    Many(Vec<LineSource>),
    One(LineSource),
}

fn read_line_sources(path: &Path) -> anyhow::Result<Vec<LineSource>> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let file: LineFile = serde_json::from_str(&text).with_context(|| {
        format!(
            "{}: expected line sets or alignment results",
            path.display()
        )
    })?;
    Ok(match file {
        LineFile::Many(v) => v,
        LineFile::One(s) => vec![s],
    })
}

fn line_sets(sources: &[LineSource]) -> Vec<LineSet> {
    sources
        .iter()
        .map(|s| match s {
            LineSource::Set(set) => set.clone(),
            LineSource::Aligned(r) => LineSet::from(r),
        })
        .collect()
}

#[derive(Serialize)]
struct EvalOutput {
    #[serde(flatten)]
    report: MetricsReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    letters: Option<Vec<LetterReport>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    confidence_buckets: Option<Vec<ConfidenceBucket>>,
}

pub fn cmd_eval(args: &EvalArgs) -> CliResult {
    let gt_sources = read_line_sources(&args.gt)?;
    let pred_sources = read_line_sources(&args.pred)?;
    let gt = line_sets(&gt_sources);
    let pred = line_sets(&pred_sources);
    let (report, letters) = evaluate(&gt, &pred, args.n).map_err(anyhow::Error::from)?;
    for (name, value) in [
        ("line accuracy", report.line_accuracy),
        ("CER", report.cer),
        ("WER", report.wer),
        ("CER_n", report.cer_n),
    ] {
        if value.is_none() {
            warn!("{name} undefined: empty ground truth");
        }
    }
    let buckets = match args.buckets {
        None => None,
        Some(width) => {
            if !(width > 0.0 && width <= 1.0) {
                return Err(anyhow!("bucket width {width} outside (0, 1]").into());
            }
            let results: Vec<AlignmentResult> = pred_sources
                .into_iter()
                .map(|s| match s {
                    LineSource::Aligned(r) => Ok(r),
                    LineSource::Set(_) => Err(anyhow!(
                        "confidence buckets need alignment outputs as --pred"
                    )),
                })
                .collect::<anyhow::Result<_>>()?;
            Some(
                confidence_buckets(&results, &gt, width, args.measure)
                    .map_err(anyhow::Error::from)?,
            )
        }
    };
    let out = to_json(&EvalOutput {
        report,
        letters: args.per_letter.then_some(letters),
        confidence_buckets: buckets,
    });
    match &args.out {
        Some(path) => write_file(path, &out)?,
        None => print!("{out}"),
    }
    Ok(())
}

/// Parses `start:end:step` into thresholds `start, start+step, …` below `end`.
pub fn parse_sweep(s: &str) -> anyhow::Result<Vec<f64>> {
    let parts: Vec<f64> = s
        .split(':')
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .with_context(|| format!("bad sweep {s:?}, expected start:end:step"))?;
    let [start, end, step] = parts[..] else {
        bail!("bad sweep {s:?}, expected start:end:step");
    };
    if step.is_nan() || step <= 0.0 || end < start {
        bail!("bad sweep {s:?}: need step > 0 and end >= start");
    }
    let count = ((end - start) / step - 1e-9).ceil().max(0.0) as usize;
    Ok((0..count).map(|i| start + i as f64 * step).collect())
}

fn expand_globs(patterns: &[String]) -> anyhow::Result<Vec<PathBuf>> {
    let mut paths = Vec::new();
    for pattern in patterns {
        let matches = glob::glob(pattern).with_context(|| format!("bad pattern {pattern:?}"))?;
        for entry in matches {
            paths.push(entry?);
        }
    }
    paths.sort();
    paths.dedup();
    if paths.is_empty() {
        bail!("no alignment files match {}", patterns.join(" "));
    }
    Ok(paths)
}

fn read_alignments(path: &Path) -> anyhow::Result<Vec<AlignmentResult>> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum OneOrMany {
        Many(Vec<AlignmentResult>),
        One(AlignmentResult),
    }
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let parsed: OneOrMany =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    Ok(match parsed {
        OneOrMany::Many(v) => v,
        OneOrMany::One(r) => vec![r],
    })
}

pub fn cmd_filter(args: &FilterArgs) -> CliResult {
    let spec = FilterSpec::new(args.threshold, args.measure).map_err(anyhow::Error::from)?;
    let paths = expand_globs(&args.alignments)?;
    let parsed: Vec<anyhow::Result<Vec<AlignmentResult>>> =
        pool(&args.workers)?.install(|| paths.par_iter().map(|p| read_alignments(p)).collect());
    let mut results = Vec::new();
    for r in parsed {
        results.extend(r?);
    }
    let total: usize = results.iter().map(|r| r.lines.len()).sum();

    let manifest = match &args.previous {
        None => filter_alignments(&results, spec),
        Some(prev_path) => {
            let text = std::fs::read_to_string(prev_path)
                .with_context(|| format!("reading {}", prev_path.display()))?;
            let previous = TrainingManifest::from_jsonl(&text)
                .with_context(|| format!("parsing {}", prev_path.display()))?;
            let (next, diff) = iteration_step(&previous, &results, spec);
            println!(
                "iteration {}: {} added, {} removed, {} modified",
                next.iteration,
                diff.added.len(),
                diff.removed.len(),
                diff.modified.len()
            );
            next
        }
    };
    write_file(&args.out, &manifest.to_jsonl())?;
    println!(
        "kept {} of {} lines (threshold {})",
        manifest.entries.len(),
        total,
        args.threshold
    );

    if let Some(sweep) = &args.sweep {
        let thresholds = parse_sweep(sweep)?;
        println!("threshold\tkept");
        for row in threshold_sweep(&results, &thresholds, args.measure) {
            println!("{:.4}\t{}", row.threshold, row.kept_count);
        }
    }
    Ok(())
}

pub fn cmd_synth(args: &SynthArgs) -> CliResult {
    let text = std::fs::read_to_string(&args.spec)
        .with_context(|| format!("reading {}", args.spec.display()))?;
    let spec: SynthSpec =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", args.spec.display()))?;
    let alphabet = match &args.alphabet {
        Some(path) => Alphabet::load(path)?,
        None => spec.alphabet()?,
    };
    let bundle = generate_posteriors(&spec, &alphabet).map_err(anyhow::Error::from)?;
    let manifest =
        write_letter(&args.out_dir, &spec, &alphabet, &bundle).map_err(anyhow::Error::from)?;
    info!(
        "wrote {} lines to {}",
        bundle.lines().len(),
        manifest.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct LetterStats {
    letter_id: String,
    lines: usize,
    #[serde(flatten)]
    stats: CompressionStats,
}

pub fn cmd_stats(args: &StatsArgs) -> CliResult {
    let mut rows = Vec::new();
    for path in &args.manifest {
        let (_, bundle) = load_letter(path)?;
        let compressed = epsilon_compress(&bundle, args.theta)?;
        rows.push(LetterStats {
            letter_id: bundle.letter_id().to_owned(),
            lines: bundle.lines().len(),
            stats: compression_stats(&bundle, &compressed),
        });
    }
    for row in &rows {
        println!("{}", serde_json::to_string(row).expect("stats serialize"));
    }
    Ok(())
}

impl From<crate::posteriors::PosteriorError> for CliError {
    fn from(e: crate::posteriors::PosteriorError) -> Self {
        CliError::Input(e.into())
    }
}

impl From<crate::synth::SynthError> for CliError {
    fn from(e: crate::synth::SynthError) -> Self {
        CliError::Input(e.into())
    }
}
