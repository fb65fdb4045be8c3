//! Independent reference implementations the library is checked against.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, HashMap};

use foodcorpus::instruct::{InstructionPair, OperatorKind, Origin};
use foodcorpus::kg::{parse_query, retrieve, KnowledgeGraph, Triple};

/// Additive-k n-gram perplexity computed by direct probability product.
pub struct NgramOracle {
    n: usize,
    k: f64,
    vocab: BTreeSet<String>,
    counts: HashMap<(Vec<String>, String), f64>,
    totals: HashMap<Vec<String>, f64>,
}

const UNK: &str = "<unk>";
const BOS: &str = "<s>";
const EOS: &str = "</s>";

impl NgramOracle {
    pub fn train(corpus: &[Vec<String>], n: usize, k: f64) -> Self {
        let mut vocab: BTreeSet<String> = [UNK, EOS].iter().map(|s| s.to_string()).collect();
        let mut counts = HashMap::new();
        let mut totals = HashMap::new();
        for seq in corpus {
            vocab.extend(seq.iter().cloned());
            let mut padded: Vec<String> = vec![BOS.to_string(); n - 1];
            padded.extend(seq.iter().cloned());
            padded.push(EOS.to_string());
            for i in (n - 1)..padded.len() {
                let ctx = padded[i + 1 - n..i].to_vec();
                *counts.entry((ctx.clone(), padded[i].clone())).or_insert(0.0) += 1.0;
                *totals.entry(ctx).or_insert(0.0) += 1.0;
            }
        }
        NgramOracle {
            n,
            k,
            vocab,
            counts,
            totals,
        }
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    fn known(&self, t: &str) -> String {
        if self.vocab.contains(t) {
            t.to_string()
        } else {
            UNK.to_string()
        }
    }

    pub fn prob(&self, ctx: &[String], token: &str) -> f64 {
        let v = self.vocab.len() as f64;
        let c = self.counts.get(&(ctx.to_vec(), token.to_string())).copied().unwrap_or(0.0);
        let total = self.totals.get(ctx).copied().unwrap_or(0.0);
        (c + self.k) / (total + self.k * v)
    }

    pub fn perplexity(&self, tokens: &[String]) -> f64 {
        let mut padded: Vec<String> = vec![BOS.to_string(); self.n - 1];
        padded.extend(tokens.iter().map(|t| self.known(t)));
        padded.push(EOS.to_string());
        let mut product = 1.0f64;
        let mut count = 0usize;
        for i in (self.n - 1)..padded.len() {
            let ctx = &padded[i + 1 - self.n..i];
            let ctx: Vec<String> = ctx.iter().map(|t| if t == BOS { t.clone() } else { self.known(t) }).collect();
            product *= self.prob(&ctx, &padded[i]);
            count += 1;
        }
        product.powf(-1.0 / count as f64)
    }

    /// Every predictable token (the vocabulary; the start marker is never
    /// predicted).
    pub fn predictable(&self) -> Vec<String> {
        self.vocab.iter().cloned().collect()
    }
}

/// Greedy leftmost-longest entity linking by direct scanning. Returns
/// (entity, char start, char end).
pub fn link_entities(query: &str, vocabulary: &[String]) -> Vec<(String, usize, usize)> {
    let chars: Vec<char> = query.chars().collect();
    let vocab: Vec<Vec<char>> = vocabulary.iter().map(|v| v.chars().collect()).collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let best = vocab
            .iter()
            .filter(|v| !v.is_empty() && chars[i..].starts_with(v))
            .max_by_key(|v| v.len());
        match best {
            Some(v) => {
                out.push((v.iter().collect(), i, i + v.len()));
                i += v.len();
            }
            None => i += 1,
        }
    }
    out
}

/// Full linear scan over the triples with brute-force scoring.
pub fn linear_retrieve(triples: &[Triple], entities: &BTreeSet<String>, limit: usize) -> Vec<usize> {
    let mut scored: Vec<(usize, bool, usize)> = Vec::new();
    for (id, t) in triples.iter().enumerate() {
        let mut touched = BTreeSet::new();
        if entities.contains(&t.subject) {
            touched.insert(&t.subject);
        }
        if entities.contains(&t.object) {
            touched.insert(&t.object);
        }
        if !touched.is_empty() {
            scored.push((touched.len(), entities.contains(&t.subject), id));
        }
    }
    // Insertion sort keeps the oracle free of library sort keys.
    let mut ranked: Vec<(usize, bool, usize)> = Vec::new();
    for item in scored {
        let pos = ranked
            .iter()
            .position(|r| (item.0, item.1) > (r.0, r.1))
            .unwrap_or(ranked.len());
        ranked.insert(pos, item);
    }
    ranked.into_iter().take(limit).map(|(_, _, id)| id).collect()
}

/// Every legal field assignment for `fields` over `k` texts: each text a
/// non-empty subset, each field used once or twice in total.
pub fn legal_assignments(fields: &[&str], k: usize) -> BTreeSet<Vec<BTreeSet<String>>> {
    let n = fields.len();
    let subsets: Vec<BTreeSet<String>> = (1u32..(1 << n))
        .map(|mask| (0..n).filter(|i| mask & (1 << i) != 0).map(|i| fields[i].to_string()).collect())
        .collect();
    let mut out = BTreeSet::new();
    let mut current = Vec::new();
    fn rec(
        subsets: &[BTreeSet<String>],
        fields: &[&str],
        k: usize,
        current: &mut Vec<BTreeSet<String>>,
        out: &mut BTreeSet<Vec<BTreeSet<String>>>,
    ) {
        if current.len() == k {
            let ok = fields.iter().all(|f| {
                let uses = current.iter().filter(|s| s.contains(*f)).count();
                (1..=2).contains(&uses)
            });
            if ok {
                out.insert(current.clone());
            }
            return;
        }
        for s in subsets {
            current.push(s.clone());
            rec(subsets, fields, k, current, out);
            current.pop();
        }
    }
    rec(&subsets, fields, k, &mut current, &mut out);
    out
}

/// Expected dataset size when every evolution succeeds and is unique:
/// round r has `sources * ops^r` pairs.
pub fn expansion_tree_size(sources: usize, ops: usize, rounds: u32) -> usize {
    (0..=rounds).map(|r| sources * ops.pow(r)).sum()
}

/// Rebuild the expansion tree from lineage and check its shape: every
/// evolved pair hangs under an existing parent, and every non-leaf pair
/// has one child per operator.
pub fn check_expansion_tree(
    pairs: &[InstructionPair],
    ops: &[OperatorKind],
    rounds: u64,
) -> Result<(), String> {
    let by_id: BTreeMap<&str, &InstructionPair> = pairs.iter().map(|p| (p.id.as_str(), p)).collect();
    if by_id.len() != pairs.len() {
        return Err("duplicate ids".into());
    }
    let mut children: BTreeMap<&str, Vec<OperatorKind>> = BTreeMap::new();
    for p in pairs {
        match (&p.origin, &p.lineage) {
            (Origin::Evolved, Some(l)) => {
                if !by_id.contains_key(l.parent.as_str()) {
                    return Err(format!("{} has missing parent {}", p.id, l.parent));
                }
                children.entry(l.parent.as_str()).or_default().push(l.operator);
            }
            (Origin::Evolved, None) => return Err(format!("{} evolved without lineage", p.id)),
            (_, Some(_)) => return Err(format!("{} has lineage but is not evolved", p.id)),
            _ => {}
        }
    }
    for p in pairs {
        let round = p.meta.get("round").and_then(|r| r.as_u64()).ok_or("missing round")?;
        let kids = children.get(p.id.as_str()).cloned().unwrap_or_default();
        let expected: Vec<OperatorKind> = if round < rounds { ops.to_vec() } else { vec![] };
        let mut got = kids.clone();
        got.sort();
        let mut want = expected.clone();
        want.sort();
        if got != want {
            return Err(format!("{} at round {round} has children {kids:?}", p.id));
        }
    }
    Ok(())
}

/// Compare `parse_query` and `retrieve` with the scan oracles on one query.
pub fn compare_retrieval(graph: &KnowledgeGraph, query: &str, limit: usize) -> Result<(), String> {
    let parsed = parse_query(query, graph);
    let expected = link_entities(query, graph.vocabulary());
    let got: Vec<(String, usize, usize)> = parsed
        .entities
        .iter()
        .map(|e| (e.entity.clone(), e.start, e.end))
        .collect();
    if got != expected {
        return Err(format!("query {query:?}: linked {got:?}, oracle {expected:?}"));
    }
    let covered: BTreeSet<usize> = expected.iter().flat_map(|(_, s, e)| *s..*e).collect();
    let residue: String = query
        .chars()
        .enumerate()
        .filter(|(i, _)| !covered.contains(i))
        .map(|(_, c)| c)
        .collect();
    if parsed.residue != residue {
        return Err(format!("query {query:?}: residue {:?}, oracle {residue:?}", parsed.residue));
    }
    let entities: BTreeSet<String> = expected.into_iter().map(|(e, _, _)| e).collect();
    let want = linear_retrieve(graph.triples(), &entities, limit);
    let retrieved = retrieve(graph, &parsed, limit);
    let got: Vec<usize> = retrieved.iter().map(|r| r.id).collect();
    if got != want {
        return Err(format!("query {query:?}: retrieved {got:?}, oracle {want:?}"));
    }
    if let Some(r) = retrieved.iter().find(|r| r.triple != graph.triples()[r.id]) {
        return Err(format!("query {query:?}: triple {} does not match its id", r.id));
    }
    Ok(())
}
