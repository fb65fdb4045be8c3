use serde::{Deserialize, Serialize, Serializer};
use thiserror::Error;

use super::{perplexity, PerplexityScorer, ScoreError, Sentence};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdPolicy {
    /// Drop sentences scoring above a fixed value.
    Absolute(f64),
    /// Drop sentences scoring above the chapter's p-th percentile
    /// (nearest-rank).
    Percentile(f64),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PolicyError {
    #[error("absolute threshold must be positive, got {0}")]
    Absolute(f64),
    #[error("percentile must lie in (0, 100), got {0}")]
    Percentile(f64),
}

impl ThresholdPolicy {
    pub fn validate(self) -> Result<Self, PolicyError> {
        match self {
            ThresholdPolicy::Absolute(t) if !(t.is_finite() && t > 0.0) => Err(PolicyError::Absolute(t)),
            ThresholdPolicy::Percentile(p) if !(p > 0.0 && p < 100.0) => Err(PolicyError::Percentile(p)),
            ok => Ok(ok),
        }
    }
}

impl Default for ThresholdPolicy {
    fn default() -> Self {
        ThresholdPolicy::Percentile(90.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FilterReport {
    pub kept: Vec<Sentence>,
    pub removed: Vec<Sentence>,
    /// `None` when there was nothing to score.
    #[serde(serialize_with = "threshold_or_none")]
    pub threshold_used: Option<f64>,
}

fn threshold_or_none<S: Serializer>(value: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
    match value {
        Some(v) => s.serialize_f64(*v),
        None => s.serialize_str("none"),
    }
}

impl FilterReport {
    /// Kept sentences joined back into text.
    pub fn kept_text(&self) -> String {
        self.kept.iter().map(|s| s.text.as_str()).collect()
    }
}

/// Nearest-rank percentile: the value at rank `ceil(p/100 * N)` of the
/// ascending order.
pub fn percentile_nearest_rank(values: &[f64], p: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = ((p / 100.0) * sorted.len() as f64).ceil() as usize;
    Some(sorted[rank.clamp(1, sorted.len()) - 1])
}

/// Score every sentence and split them at the policy threshold. A sentence
/// is removed iff its perplexity is strictly greater than the threshold;
/// both halves keep input order.
pub fn filter_chapter(
    sentences: Vec<Sentence>,
    scorer: &dyn PerplexityScorer,
    policy: ThresholdPolicy,
) -> Result<FilterReport, ScoreError> {
    if sentences.is_empty() {
        return Ok(FilterReport {
            kept: vec![],
            removed: vec![],
            threshold_used: None,
        });
    }
    let mut scored = Vec::with_capacity(sentences.len());
    for mut sentence in sentences {
        sentence.ppl = Some(perplexity(scorer, &sentence)?);
        scored.push(sentence);
    }
    let threshold = match policy {
        ThresholdPolicy::Absolute(t) => t,
        ThresholdPolicy::Percentile(p) => {
            let ppls: Vec<f64> = scored.iter().filter_map(|s| s.ppl).collect();
            percentile_nearest_rank(&ppls, p).expect("non-empty")
        }
    };
    let (removed, kept) = scored
        .into_iter()
        .partition(|s| s.ppl.is_some_and(|p| p > threshold));
    Ok(FilterReport {
        kept,
        removed,
        threshold_used: Some(threshold),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Reads the score from the sentence text.
    struct Literal;

    impl PerplexityScorer for Literal {
        fn score(&self, text: &str) -> Result<f64, ScoreError> {
            Ok(text.trim().parse().unwrap())
        }
    }

    fn sentences(ppls: &[f64]) -> Vec<Sentence> {
        ppls.iter()
            .enumerate()
            .map(|(i, p)| Sentence::new(i, format!("{p} ")))
            .collect()
    }

    #[test]
    fn nearest_rank() {
        let mut values = vec![2.0; 9];
        values.push(100.0);
        assert_eq!(percentile_nearest_rank(&values, 90.0), Some(2.0));
        assert_eq!(percentile_nearest_rank(&values, 91.0), Some(100.0));
        assert_eq!(percentile_nearest_rank(&[5.0], 1.0), Some(5.0));
        assert_eq!(percentile_nearest_rank(&[], 50.0), None);
    }

    #[test]
    fn percentile_removes_outlier() {
        let mut ppls = vec![2.0; 9];
        ppls.push(100.0);
        let r = filter_chapter(sentences(&ppls), &Literal, ThresholdPolicy::Percentile(90.0)).unwrap();
        assert_eq!(r.threshold_used, Some(2.0));
        assert_eq!(r.removed.len(), 1);
        assert_eq!(r.removed[0].ppl, Some(100.0));
        assert_eq!(r.kept.len(), 9);
    }

    #[test]
    fn equal_scores_remove_nothing() {
        let r = filter_chapter(sentences(&[4.0; 7]), &Literal, ThresholdPolicy::Percentile(90.0)).unwrap();
        assert!(r.removed.is_empty());
    }

    #[test]
    fn absolute() {
        let r = filter_chapter(sentences(&[3.0, 7.0]), &Literal, ThresholdPolicy::Absolute(5.0)).unwrap();
        assert_eq!(r.kept.iter().map(|s| s.ppl.unwrap()).collect::<Vec<_>>(), [3.0]);
        assert_eq!(r.removed.iter().map(|s| s.ppl.unwrap()).collect::<Vec<_>>(), [7.0]);
    }

    #[test]
    fn empty_chapter() {
        let r = filter_chapter(vec![], &Literal, ThresholdPolicy::Percentile(90.0)).unwrap();
        assert!(r.kept.is_empty() && r.removed.is_empty());
        assert_eq!(r.threshold_used, None);
        let json = serde_json::to_value(&r).unwrap();
        assert_eq!(json["threshold_used"], "none");
    }

    #[test]
    fn policy_bounds() {
        assert!(ThresholdPolicy::Percentile(0.0).validate().is_err());
        assert!(ThresholdPolicy::Percentile(100.0).validate().is_err());
        assert!(ThresholdPolicy::Absolute(-1.0).validate().is_err());
        assert!(ThresholdPolicy::Percentile(50.0).validate().is_ok());
    }
}
