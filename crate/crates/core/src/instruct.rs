//! Instruction-tuning dataset construction.
//!
//! Two channels feed the dataset: forum answers, ranked so that prolific
//! answerers come first, and expert seed instructions. Both are expanded by
//! evol-instruct style rewriting through a generator, round by round, with
//! duplicates (after whitespace normalization) dropped.

use std::collections::HashSet;
use std::path::Path;

use indexmap::IndexMap;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::document::Skip;
use crate::example::Meta;
use crate::generator::{GeneratorClient, GeneratorError};
use crate::seed::{content_id, derive_seed, stream};
use crate::template::{fill, placeholders};

/// Seed-set size the expansion procedure is designed around.
pub const EXPECTED_SEED_COUNT: usize = 100;

fn string_or_number<'de, D: Deserializer<'de>>(d: D) -> Result<String, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Id {
        S(String),
        N(serde_json::Number),
    }
    Ok(match Id::deserialize(d)? {
        Id::S(s) => s,
        Id::N(n) => n.to_string(),
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForumPost {
    #[serde(deserialize_with = "string_or_number")]
    pub question_id: String,
    pub question_text: String,
    pub answer_text: String,
    #[serde(deserialize_with = "string_or_number")]
    pub author_id: String,
    pub author_post_count: u64,
    pub timestamp: i64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    Forum,
    Seed,
    Evolved,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperatorKind {
    AddConstraints,
    Deepen,
    Concretize,
    IncreaseReasoning,
    InBreadth,
}

impl OperatorKind {
    pub const ALL: [OperatorKind; 5] = [
        OperatorKind::AddConstraints,
        OperatorKind::Deepen,
        OperatorKind::Concretize,
        OperatorKind::IncreaseReasoning,
        OperatorKind::InBreadth,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            OperatorKind::AddConstraints => "add_constraints",
            OperatorKind::Deepen => "deepen",
            OperatorKind::Concretize => "concretize",
            OperatorKind::IncreaseReasoning => "increase_reasoning",
            OperatorKind::InBreadth => "in_breadth",
        }
    }

    fn default_template(self) -> &'static str {
        match self {
            OperatorKind::AddConstraints => {
                "请为下面的食品检测指令增加一项约束或要求，使其更具挑战性，只输出改写后的指令：\n{instruction}"
            }
            OperatorKind::Deepen => "请加深下面指令所涉及问题的深度和广度，只输出改写后的指令：\n{instruction}",
            OperatorKind::Concretize => "请将下面指令中的一般概念替换为更具体的食品或检测项目，只输出改写后的指令：\n{instruction}",
            OperatorKind::IncreaseReasoning => {
                "请改写下面的指令，使其需要多步推理才能回答，只输出改写后的指令：\n{instruction}"
            }
            OperatorKind::InBreadth => {
                "请以下面的指令为灵感，写一条同属食品检测领域但更少见的新指令，只输出新指令：\n{instruction}"
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OperatorError {
    #[error("operator {0} template has no {{instruction}} placeholder")]
    MissingPlaceholder(&'static str),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct EvolOperator {
    pub kind: OperatorKind,
    pub prompt_template: String,
}

impl EvolOperator {
    pub fn new(kind: OperatorKind, prompt_template: impl Into<String>) -> Result<Self, OperatorError> {
        let prompt_template = prompt_template.into();
        if !placeholders(&prompt_template).contains("instruction") {
            return Err(OperatorError::MissingPlaceholder(kind.as_str()));
        }
        Ok(EvolOperator { kind, prompt_template })
    }

    pub fn builtin(kind: OperatorKind) -> Self {
        EvolOperator::new(kind, kind.default_template()).expect("builtin templates are valid")
    }

    pub fn prompt(&self, instruction: &str) -> String {
        fill(&self.prompt_template, &[("instruction", instruction)])
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lineage {
    pub parent: String,
    pub operator: OperatorKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstructionPair {
    pub id: String,
    pub instruction: String,
    pub response: String,
    pub origin: Origin,
    pub lineage: Option<Lineage>,
    pub meta: Meta,
}

/// Collapse whitespace runs and trim; the dedup and identity key.
pub fn normalize_instruction(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

impl InstructionPair {
    pub fn new(instruction: impl Into<String>, response: impl Into<String>, origin: Origin) -> Self {
        let instruction = instruction.into();
        InstructionPair {
            id: content_id(&["instruction", &normalize_instruction(&instruction)]),
            instruction,
            response: response.into(),
            origin,
            lineage: None,
            meta: Meta::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ForumPolicy {
    pub min_post_count: u64,
    pub top_m: usize,
}

impl Default for ForumPolicy {
    fn default() -> Self {
        ForumPolicy {
            min_post_count: 0,
            top_m: 1,
        }
    }
}

/// Per question, keep the `top_m` answers by authors with at least
/// `min_post_count` posts, ranked by post count (desc), timestamp (asc),
/// author id (asc). Questions are emitted in order of first appearance.
pub fn select_forum_answers(posts: &[ForumPost], policy: ForumPolicy) -> Vec<InstructionPair> {
    let mut by_question: IndexMap<&str, Vec<&ForumPost>> = IndexMap::new();
    for post in posts {
        if post.question_text.trim().is_empty() || post.answer_text.trim().is_empty() {
            continue;
        }
        by_question.entry(&post.question_id).or_default().push(post);
    }
    let mut out = Vec::new();
    for (question_id, mut answers) in by_question {
        answers.retain(|p| p.author_post_count >= policy.min_post_count);
        answers.sort_by(|a, b| {
            b.author_post_count
                .cmp(&a.author_post_count)
                .then(a.timestamp.cmp(&b.timestamp))
                .then(a.author_id.cmp(&b.author_id))
        });
        for post in answers.into_iter().take(policy.top_m.max(1)) {
            let mut pair = InstructionPair::new(&post.question_text, &post.answer_text, Origin::Forum);
            pair.meta.insert("question_id".into(), json!(question_id));
            pair.meta.insert("author_id".into(), json!(post.author_id));
            pair.meta.insert("author_post_count".into(), json!(post.author_post_count));
            out.push(pair);
        }
    }
    out
}

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Default)]
pub struct SeedLoad {
    pub pairs: Vec<InstructionPair>,
    pub skipped: Vec<Skip>,
    pub warning: Option<String>,
}

impl SeedLoad {
    pub fn count(&self) -> usize {
        self.pairs.len()
    }
}

#[derive(Deserialize)]
struct SeedLine {
    instruction: String,
    response: String,
}

fn read_lines(path: &Path) -> Result<String, LoadError> {
    std::fs::read_to_string(path).map_err(|source| LoadError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Load `{instruction, response}` lines. Malformed lines are skipped and
/// recorded; a count other than [`EXPECTED_SEED_COUNT`] produces a warning.
pub fn load_seed_instructions(path: &Path) -> Result<SeedLoad, LoadError> {
    let text = read_lines(path)?;
    let mut out = SeedLoad::default();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<SeedLine>(line) {
            Ok(seed) if !seed.instruction.trim().is_empty() => {
                let mut pair = InstructionPair::new(seed.instruction, seed.response, Origin::Seed);
                pair.meta.insert("seed_line".into(), json!(i + 1));
                out.pairs.push(pair);
            }
            Ok(_) => out.skipped.push(Skip::new(format!("line {}", i + 1), "empty instruction")),
            Err(e) => out.skipped.push(Skip::new(format!("line {}", i + 1), e.to_string())),
        }
    }
    if out.pairs.len() != EXPECTED_SEED_COUNT {
        out.warning = Some(format!(
            "loaded {} seed instructions, expected {EXPECTED_SEED_COUNT}",
            out.pairs.len()
        ));
    }
    Ok(out)
}

pub fn load_forum_posts(path: &Path) -> Result<(Vec<ForumPost>, Vec<Skip>), LoadError> {
    let text = read_lines(path)?;
    let mut posts = Vec::new();
    let mut skipped = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<ForumPost>(line) {
            Ok(post) => posts.push(post),
            Err(e) => skipped.push(Skip::new(format!("line {}", i + 1), e.to_string())),
        }
    }
    Ok((posts, skipped))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvolveFailure {
    pub parent: String,
    pub operator: OperatorKind,
    pub reason: String,
}

/// Rewrite one instruction with one operator and ask the generator for its
/// answer. A rewrite equal to its parent after normalization is rejected.
pub fn evolve(
    pair: &InstructionPair,
    op: &EvolOperator,
    client: &dyn GeneratorClient,
    seed: u64,
) -> Result<InstructionPair, EvolveFailure> {
    let fail = |reason: String| EvolveFailure {
        parent: pair.id.clone(),
        operator: op.kind,
        reason,
    };
    let generator_fail = |e: GeneratorError| fail(e.to_string());
    let evolved = client
        .evolve(&pair.instruction, op.kind.as_str(), &op.prompt(&pair.instruction), seed)
        .map_err(generator_fail)?;
    if normalize_instruction(&evolved) == normalize_instruction(&pair.instruction) {
        return Err(fail("generator returned the instruction unchanged".into()));
    }
    let (response, placeholder) = client.answer(&evolved, seed).map_err(generator_fail)?;
    let mut child = InstructionPair::new(evolved, response, Origin::Evolved);
    child.lineage = Some(Lineage {
        parent: pair.id.clone(),
        operator: op.kind,
    });
    child.meta.insert("publishable".into(), json!(!placeholder));
    Ok(child)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvolveConfig {
    pub rounds: usize,
    pub operators: Vec<EvolOperator>,
    /// Also evolve forum pairs, not only seeds.
    pub evolve_forum: bool,
    pub max_in_flight: usize,
}

impl Default for EvolveConfig {
    fn default() -> Self {
        EvolveConfig {
            rounds: 1,
            operators: OperatorKind::ALL.into_iter().map(EvolOperator::builtin).collect(),
            evolve_forum: true,
            max_in_flight: 8,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct DatasetBuild {
    pub pairs: Vec<InstructionPair>,
    pub failures: Vec<EvolveFailure>,
    pub duplicates: usize,
}

/// Expand `sources` (round 0) by applying every operator to every pair
/// accepted in the previous round, then shuffle with a seeded stream.
/// Evolution calls run concurrently; acceptance follows the fixed order
/// (round, parent, operator), so the result does not depend on scheduling.
pub fn build_instruction_dataset(
    sources: Vec<InstructionPair>,
    config: &EvolveConfig,
    client: &dyn GeneratorClient,
    master_seed: u64,
) -> DatasetBuild {
    let mut seen: HashSet<String> = HashSet::new();
    let mut build = DatasetBuild::default();
    let mut frontier = Vec::new();
    for mut pair in sources {
        if !seen.insert(normalize_instruction(&pair.instruction)) {
            build.duplicates += 1;
            continue;
        }
        pair.meta.insert("round".into(), json!(0));
        if config.evolve_forum || pair.origin != Origin::Forum {
            frontier.push(build.pairs.len());
        }
        build.pairs.push(pair);
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.max_in_flight.max(1))
        .build()
        .expect("thread pool");
    for round in 1..=config.rounds {
        let tasks: Vec<(usize, &EvolOperator)> = frontier
            .iter()
            .flat_map(|&p| config.operators.iter().map(move |op| (p, op)))
            .collect();
        let parents = &build.pairs;
        let results: Vec<Result<InstructionPair, EvolveFailure>> = pool.install(|| {
            tasks
                .par_iter()
                .map(|&(p, op)| {
                    let parent = &parents[p];
                    let seed = derive_seed(master_seed, &["evolve", &parent.id, op.kind.as_str()]);
                    evolve(parent, op, client, seed)
                })
                .collect()
        });
        let mut next = Vec::new();
        for result in results {
            match result {
                Ok(mut child) => {
                    if !seen.insert(normalize_instruction(&child.instruction)) {
                        build.duplicates += 1;
                        continue;
                    }
                    child.meta.insert("round".into(), json!(round));
                    next.push(build.pairs.len());
                    build.pairs.push(child);
                }
                Err(failure) => build.failures.push(failure),
            }
        }
        frontier = next;
    }
    build.pairs.shuffle(&mut stream(master_seed, &["instructions", "shuffle"]));
    build
}
