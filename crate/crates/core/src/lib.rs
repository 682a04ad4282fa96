//! Forced alignment of letter-level transcriptions to sequences of text-line
//! CTC posteriors, producing line-level pseudo-labels with confidences.

pub mod aligner;
pub mod cli;
pub mod filter;
pub mod fsa;
pub mod metrics;
pub mod posteriors;
pub mod synth;
