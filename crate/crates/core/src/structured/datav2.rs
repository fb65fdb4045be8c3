use std::collections::BTreeSet;

use indexmap::{IndexMap, IndexSet};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use super::StructuredRecord;
use crate::example::{Meta, Source, TrainingExample};
use crate::generator::{GeneratorClient, GeneratorError};

pub const TEMPERATURE_MIN: f64 = 0.5;
pub const TEMPERATURE_MAX: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AssignmentError {
    #[error("no fields to assign")]
    NoFields,
    #[error("need at least one text")]
    NoTexts,
    #[error("{texts} texts cannot each get a field when {fields} fields may be used at most twice")]
    Infeasible { texts: usize, fields: usize },
    #[error("extension probability must lie in [0, 1], got {0}")]
    Probability(f64),
}

/// Which fields each of the K texts of a record sees.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldAssignment {
    /// One non-empty field list per text, each in record field order.
    pub texts: Vec<Vec<String>>,
    /// Total occurrences of every field across the texts.
    pub usage: IndexMap<String, usize>,
}

impl FieldAssignment {
    /// Every field used once or twice, every text non-empty, only known
    /// fields, no field repeated within a text.
    pub fn is_valid_for(&self, fields: &[String]) -> bool {
        let known: BTreeSet<&str> = fields.iter().map(String::as_str).collect();
        let texts_ok = self.texts.iter().all(|t| {
            let unique: BTreeSet<&str> = t.iter().map(String::as_str).collect();
            !t.is_empty() && unique.len() == t.len() && unique.is_subset(&known)
        });
        let usage_ok = known.iter().all(|f| {
            let n = self.texts.iter().filter(|t| t.iter().any(|x| x == f)).count();
            (1..=2).contains(&n) && self.usage.get(*f) == Some(&n)
        });
        texts_ok && usage_ok && self.usage.len() == known.len()
    }
}

/// Sample a field assignment for `texts` texts.
///
/// Each field contributes two copies to a shuffled pool. The first `texts`
/// copies are dealt one per text, which makes every text non-empty. Each
/// remaining copy joins, with probability `extend_probability`, a uniformly
/// chosen text that lacks that field, and is discarded otherwise. A field
/// left unused is then placed into a uniformly chosen text. Usage therefore
/// never exceeds two and never falls below one.
pub fn sample_field_assignment<R: Rng + ?Sized>(
    field_names: &[String],
    texts: usize,
    extend_probability: f64,
    rng: &mut R,
) -> Result<FieldAssignment, AssignmentError> {
    let fields: Vec<&String> = field_names.iter().collect::<IndexSet<_>>().into_iter().collect();
    if fields.is_empty() {
        return Err(AssignmentError::NoFields);
    }
    if texts == 0 {
        return Err(AssignmentError::NoTexts);
    }
    if texts > 2 * fields.len() {
        return Err(AssignmentError::Infeasible {
            texts,
            fields: fields.len(),
        });
    }
    if !(0.0..=1.0).contains(&extend_probability) {
        return Err(AssignmentError::Probability(extend_probability));
    }
    let mut pool: Vec<usize> = (0..fields.len()).flat_map(|f| [f, f]).collect();
    pool.shuffle(rng);
    let mut sets: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); texts];
    for (set, &field) in sets.iter_mut().zip(&pool) {
        set.insert(field);
    }
    for &field in &pool[texts..] {
        if !rng.gen_bool(extend_probability) {
            continue;
        }
        let open: Vec<usize> = (0..texts).filter(|&t| !sets[t].contains(&field)).collect();
        if let Some(&t) = open.choose(rng) {
            sets[t].insert(field);
        }
    }
    for field in 0..fields.len() {
        if sets.iter().all(|s| !s.contains(&field)) {
            let t = rng.gen_range(0..texts);
            sets[t].insert(field);
        }
    }
    let usage = fields
        .iter()
        .enumerate()
        .map(|(i, f)| ((*f).clone(), sets.iter().filter(|s| s.contains(&i)).count()))
        .collect();
    Ok(FieldAssignment {
        texts: sets
            .into_iter()
            .map(|s| s.into_iter().map(|i| fields[i].clone()).collect())
            .collect(),
        usage,
    })
}

/// Map `u` in [0, 1] onto the temperature range.
pub fn temperature_from_unit(u: f64) -> f64 {
    TEMPERATURE_MIN + (TEMPERATURE_MAX - TEMPERATURE_MIN) * u
}

pub fn sample_temperature<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    temperature_from_unit(rng.gen::<f64>())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationParams {
    pub temperature: f64,
    pub seed: u64,
    pub fields_in_prompt: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Datav2Error {
    #[error(transparent)]
    Assignment(#[from] AssignmentError),
    #[error("text {index}: {source}")]
    Generator {
        index: usize,
        #[source]
        source: GeneratorError,
    },
}

/// Generate `texts` verbalizations of an already redacted and merged record.
pub fn build_datav2<R: Rng + ?Sized>(
    record: &StructuredRecord,
    texts: usize,
    extend_probability: f64,
    client: &dyn GeneratorClient,
    rng: &mut R,
) -> Result<Vec<TrainingExample>, Datav2Error> {
    let names: Vec<String> = record.fields.keys().cloned().collect();
    let assignment = sample_field_assignment(&names, texts, extend_probability, rng)?;
    let mut out = Vec::with_capacity(texts);
    for (index, subset) in assignment.texts.into_iter().enumerate() {
        let params = GenerationParams {
            temperature: sample_temperature(rng),
            seed: u64::from(rng.gen::<u32>()),
            fields_in_prompt: subset,
        };
        let projection: IndexMap<String, String> = params
            .fields_in_prompt
            .iter()
            .map(|f| (f.clone(), record.fields[f].clone()))
            .collect();
        let text = client
            .generate(&projection, params.temperature, params.seed)
            .map_err(|source| Datav2Error::Generator { index, source })?;
        let mut meta = Meta::new();
        meta.insert("record_id".into(), json!(record.record_id));
        meta.insert("text_index".into(), json!(index));
        meta.insert("fields_used".into(), json!(params.fields_in_prompt));
        meta.insert("temperature".into(), json!(params.temperature));
        meta.insert("seed".into(), json!(params.seed));
        out.push(TrainingExample::new(Source::Datav2, text, meta));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generator::FallbackGenerator;
    use crate::seed::stream;

    fn names(n: &[&str]) -> Vec<String> {
        n.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn single_field_single_text() {
        let a = sample_field_assignment(&names(&["A"]), 1, 0.5, &mut stream(0, &[])).unwrap();
        assert_eq!(a.texts, vec![names(&["A"])]);
    }

    #[test]
    fn infeasible() {
        assert_eq!(
            sample_field_assignment(&names(&["A"]), 3, 0.5, &mut stream(0, &[])),
            Err(AssignmentError::Infeasible { texts: 3, fields: 1 })
        );
        assert_eq!(
            sample_field_assignment(&[], 1, 0.5, &mut stream(0, &[])),
            Err(AssignmentError::NoFields)
        );
        assert!(sample_field_assignment(&names(&["A"]), 1, 1.5, &mut stream(0, &[])).is_err());
    }

    #[test]
    fn always_valid() {
        let fields = names(&["a", "b", "c", "d"]);
        for seed in 0..500 {
            for k in 1..=8 {
                for q in [0.0, 0.5, 1.0] {
                    let a = sample_field_assignment(&fields, k, q, &mut stream(seed, &[])).unwrap();
                    assert!(a.is_valid_for(&fields), "{a:?}");
                    assert_eq!(a.texts.len(), k);
                }
            }
        }
    }

    #[test]
    fn temperature_endpoints() {
        assert_eq!(temperature_from_unit(0.0), 0.5);
        assert_eq!(temperature_from_unit(1.0), 1.0);
    }

    #[test]
    fn datav2_fallback() {
        let record = StructuredRecord::new("r", [("食品", "牛奶"), ("项目", "铅"), ("限量", "0.05 mg/kg")]);
        let a = build_datav2(&record, 2, 0.5, &FallbackGenerator, &mut stream(9, &[])).unwrap();
        let b = build_datav2(&record, 2, 0.5, &FallbackGenerator, &mut stream(9, &[])).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 2);
        for value in ["牛奶", "铅", "0.05 mg/kg"] {
            let hits = a.iter().filter(|e| e.text.contains(value)).count();
            assert!((1..=2).contains(&hits), "{value}: {hits}");
        }
        let t = a[0].meta["temperature"].as_f64().unwrap();
        assert!((0.5..=1.0).contains(&t));
        let small = StructuredRecord::new("r", [("a", "1"), ("b", "2")]);
        assert!(matches!(
            build_datav2(&small, 10, 0.5, &FallbackGenerator, &mut stream(0, &[])),
            Err(Datav2Error::Assignment(AssignmentError::Infeasible { .. }))
        ));
    }
}
