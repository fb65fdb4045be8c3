use std::collections::{BTreeSet, HashMap, HashSet};
use std::io::{BufRead, Write};

use aho_corasick::{AhoCorasick, MatchKind};
use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::document::Skip;
use crate::structured::StructuredRecord;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Triple {
    #[serde(rename = "s")]
    pub subject: String,
    #[serde(rename = "p")]
    pub predicate: String,
    #[serde(rename = "o")]
    pub object: String,
    pub provenance: String,
}

impl Triple {
    pub fn new(
        subject: impl Into<String>,
        predicate: impl Into<String>,
        object: impl Into<String>,
        provenance: impl Into<String>,
    ) -> Self {
        Triple {
            subject: subject.into(),
            predicate: predicate.into(),
            object: object.into(),
            provenance: provenance.into(),
        }
    }

    fn is_complete(&self) -> bool {
        !self.subject.is_empty() && !self.predicate.is_empty() && !self.object.is_empty() && !self.provenance.is_empty()
    }
}

/// Which record field is the subject and which fields become predicates.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KgSchema {
    pub subject_field: String,
    /// Source field → predicate name, in emission order.
    pub predicates: IndexMap<String, String>,
}

/// Immutable triple store. Triples are unique on `(s, p, o)`; the entity
/// index maps every subject and object string to the triples containing it.
#[derive(Debug, Clone)]
pub struct KnowledgeGraph {
    triples: Vec<Triple>,
    index: HashMap<String, Vec<usize>>,
    vocabulary: Vec<String>,
    matcher: Option<AhoCorasick>,
}

impl KnowledgeGraph {
    /// Build from triples, keeping the first occurrence (and provenance) of
    /// each `(s, p, o)`. Incomplete triples are dropped.
    pub fn from_triples(triples: impl IntoIterator<Item = Triple>) -> Self {
        let mut seen: HashSet<(String, String, String)> = HashSet::new();
        let mut kept = Vec::new();
        for t in triples {
            if t.is_complete() && seen.insert((t.subject.clone(), t.predicate.clone(), t.object.clone())) {
                kept.push(t);
            }
        }
        let mut index: HashMap<String, Vec<usize>> = HashMap::new();
        for (i, t) in kept.iter().enumerate() {
            index.entry(t.subject.clone()).or_default().push(i);
            if t.object != t.subject {
                index.entry(t.object.clone()).or_default().push(i);
            }
        }
        let vocabulary: Vec<String> = index.keys().cloned().collect::<BTreeSet<_>>().into_iter().collect();
        let matcher = (!vocabulary.is_empty()).then(|| {
            AhoCorasick::builder()
                .match_kind(MatchKind::LeftmostLongest)
                .build(&vocabulary)
                .expect("vocabulary automaton")
        });
        KnowledgeGraph {
            triples: kept,
            index,
            vocabulary,
            matcher,
        }
    }

    pub fn triples(&self) -> &[Triple] {
        &self.triples
    }

    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    /// Sorted subject and object strings.
    pub fn vocabulary(&self) -> &[String] {
        &self.vocabulary
    }

    /// Triple ids containing `entity` as subject or object, ascending.
    pub fn triples_for(&self, entity: &str) -> &[usize] {
        self.index.get(entity).map_or(&[], Vec::as_slice)
    }

    pub(crate) fn matcher(&self) -> Option<&AhoCorasick> {
        self.matcher.as_ref()
    }

    /// Merge another triple list into a new graph (first provenance wins).
    pub fn extended(&self, more: impl IntoIterator<Item = Triple>) -> Self {
        KnowledgeGraph::from_triples(self.triples.iter().cloned().chain(more))
    }
}

/// One triple per non-empty mapped field of every record. Records without
/// a subject value are skipped.
pub fn build_graph(records: &[StructuredRecord], schema: &KgSchema) -> (KnowledgeGraph, Vec<Skip>) {
    let mut triples = Vec::new();
    let mut skipped = Vec::new();
    for record in records {
        let subject = match record.get(&schema.subject_field) {
            Some(s) if !s.is_empty() => s,
            _ => {
                skipped.push(Skip::new(&record.record_id, "missing subject field"));
                continue;
            }
        };
        for (field, predicate) in &schema.predicates {
            if let Some(value) = record.get(field).filter(|v| !v.is_empty()) {
                triples.push(Triple::new(subject, predicate, value, &record.record_id));
            }
        }
    }
    (KnowledgeGraph::from_triples(triples), skipped)
}

pub fn save_triples<W: Write>(graph: &KnowledgeGraph, out: W) -> std::io::Result<usize> {
    crate::example::write_jsonl(out, graph.triples())
}

/// Read a triples JSONL file. Malformed or incomplete lines are skipped.
pub fn load_triples<R: BufRead>(input: R) -> std::io::Result<(Vec<Triple>, Vec<Skip>)> {
    let mut triples = Vec::new();
    let mut skipped = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<Triple>(&line) {
            Ok(t) if t.is_complete() => triples.push(t),
            Ok(_) => skipped.push(Skip::new(format!("line {}", i + 1), "empty triple component")),
            Err(e) => skipped.push(Skip::new(format!("line {}", i + 1), e.to_string())),
        }
    }
    Ok((triples, skipped))
}
