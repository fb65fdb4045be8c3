//! Sentence-level quality filtering by language-model perplexity.
//!
//! OCR turns tables and formulas into disfluent runs of symbols; those runs
//! score a much higher perplexity than running prose and are dropped per
//! chapter under a threshold policy.

mod filter;
mod ngram;
mod scorer;
mod segment;
mod tokenize;

pub use filter::{filter_chapter, percentile_nearest_rank, FilterReport, PolicyError, ThresholdPolicy};
pub use ngram::{train_ngram, ModelFormatError, NgramModel, TrainError, BOS, EOS, UNK};
pub use scorer::{perplexity, ExternalScorer, MaxScorer, NgramScorer, PerplexityScorer, ScoreError};
pub use segment::{segment_sentences, SegmentConfig, Sentence};
pub use tokenize::Tokenizer;
