use thiserror::Error;

use super::{NgramModel, Sentence, Tokenizer};
use crate::generator::{GeneratorClient, GeneratorError};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ScoreError {
    #[error("sentence {0:?} has no tokens")]
    Unscoreable(String),
    #[error("scorer returned a non-positive or non-finite value {0}")]
    InvalidScore(f64),
    #[error(transparent)]
    Generator(#[from] GeneratorError),
}

/// Maps a sentence to a positive, finite perplexity. Implementations are
/// immutable once built, so the same text always gets the same score.
pub trait PerplexityScorer: Send + Sync {
    fn score(&self, text: &str) -> Result<f64, ScoreError>;
}

/// Score a sentence, checking the result is a usable perplexity.
pub fn perplexity(scorer: &dyn PerplexityScorer, sentence: &Sentence) -> Result<f64, ScoreError> {
    let ppl = scorer.score(&sentence.text)?;
    if !(ppl.is_finite() && ppl > 0.0) {
        return Err(ScoreError::InvalidScore(ppl));
    }
    Ok(ppl)
}

#[derive(Debug, Clone)]
pub struct NgramScorer {
    pub model: NgramModel,
    pub tokenizer: Tokenizer,
}

impl NgramScorer {
    pub fn new(model: NgramModel, tokenizer: Tokenizer) -> Self {
        NgramScorer { model, tokenizer }
    }
}

impl PerplexityScorer for NgramScorer {
    fn score(&self, text: &str) -> Result<f64, ScoreError> {
        let tokens = self.tokenizer.tokenize(text);
        self.model
            .perplexity(&tokens)
            .ok_or_else(|| ScoreError::Unscoreable(text.to_string()))
    }
}

/// Scores through a generator endpoint (`"task":"perplexity"`).
pub struct ExternalScorer<C> {
    client: C,
}

impl<C: GeneratorClient> ExternalScorer<C> {
    pub fn new(client: C) -> Self {
        ExternalScorer { client }
    }
}

impl<C: GeneratorClient> PerplexityScorer for ExternalScorer<C> {
    fn score(&self, text: &str) -> Result<f64, ScoreError> {
        if text.trim().is_empty() {
            return Err(ScoreError::Unscoreable(text.to_string()));
        }
        Ok(self.client.perplexity(text)?)
    }
}

/// Ensemble that reports the largest score of its members, so a sentence is
/// dropped if any member finds it disfluent.
pub struct MaxScorer {
    members: Vec<Box<dyn PerplexityScorer>>,
}

impl MaxScorer {
    pub fn new(members: Vec<Box<dyn PerplexityScorer>>) -> Self {
        assert!(!members.is_empty(), "ensemble needs at least one scorer");
        MaxScorer { members }
    }
}

impl PerplexityScorer for MaxScorer {
    fn score(&self, text: &str) -> Result<f64, ScoreError> {
        let mut best = f64::NEG_INFINITY;
        for member in &self.members {
            best = best.max(member.score(text)?);
        }
        Ok(best)
    }
}
