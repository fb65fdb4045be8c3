use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{KnowledgeGraph, Triple};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityMatch {
    pub entity: String,
    /// Character offsets, end exclusive.
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedQuery {
    pub raw: String,
    pub entities: Vec<EntityMatch>,
    /// The query with matched spans cut out.
    pub residue: String,
}

impl ParsedQuery {
    pub fn distinct_entities(&self) -> BTreeSet<&str> {
        self.entities.iter().map(|m| m.entity.as_str()).collect()
    }
}

/// Link the query against the graph vocabulary, scanning left to right and
/// taking the longest entry that starts at each position.
pub fn parse_query(query: &str, graph: &KnowledgeGraph) -> ParsedQuery {
    let mut entities = Vec::new();
    let mut residue = String::new();
    let mut last = 0;
    if let Some(matcher) = graph.matcher() {
        for m in matcher.find_iter(query) {
            residue.push_str(&query[last..m.start()]);
            last = m.end();
            let start = query[..m.start()].chars().count();
            let entity = query[m.start()..m.end()].to_string();
            let end = start + entity.chars().count();
            entities.push(EntityMatch { entity, start, end });
        }
    }
    residue.push_str(&query[last..]);
    ParsedQuery {
        raw: query.to_string(),
        entities,
        residue,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetrievedTriple {
    pub id: usize,
    pub triple: Triple,
    /// Distinct matched entities among the subject and object.
    pub score: usize,
    pub subject_match: bool,
}

/// Triples whose subject or object is a matched entity, ranked by score
/// (desc), subject matches before object-only matches, then graph order.
pub fn retrieve(graph: &KnowledgeGraph, parsed: &ParsedQuery, limit: usize) -> Vec<RetrievedTriple> {
    let entities = parsed.distinct_entities();
    let candidates: BTreeSet<usize> = entities
        .iter()
        .flat_map(|e| graph.triples_for(e).iter().copied())
        .collect();
    let mut ranked: Vec<RetrievedTriple> = candidates
        .into_iter()
        .map(|id| {
            let triple = &graph.triples()[id];
            let subject_match = entities.contains(triple.subject.as_str());
            let object_match = entities.contains(triple.object.as_str());
            let score = if triple.subject == triple.object {
                usize::from(subject_match)
            } else {
                usize::from(subject_match) + usize::from(object_match)
            };
            RetrievedTriple {
                id,
                triple: triple.clone(),
                score,
                subject_match,
            }
        })
        .collect();
    ranked.sort_by(|a, b| {
        b.score
            .cmp(&a.score)
            .then(b.subject_match.cmp(&a.subject_match))
            .then(a.id.cmp(&b.id))
    });
    ranked.truncate(limit.max(1));
    ranked
}
