//! Helpers shared by the integration test targets.
#![allow(dead_code)]

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;

use foodcorpus::fixture::{write_fixture, FixtureLayout, FixtureSpec};
use foodcorpus::pipeline::{validate_config, PipelineConfig};

pub fn small_spec() -> FixtureSpec {
    FixtureSpec {
        documents: 12,
        records: 60,
        forum_questions: 6,
        seeds: 3,
    }
}

/// Fixture under `root` plus its validated config.
pub fn fixture(root: &Path, spec: &FixtureSpec, seed: u64) -> (FixtureLayout, PipelineConfig) {
    let layout = write_fixture(root, spec, seed).expect("fixture written");
    let config = validate_config(&layout.config).expect("fixture config validates");
    (layout, config)
}

/// Config writing to `out` with `workers` threads.
pub fn with_output(mut config: PipelineConfig, out: &Path, workers: usize) -> PipelineConfig {
    config.output_dir = out.to_path_buf();
    config.workers = workers;
    config
}

/// Every regular file under `dir`, relative, sorted.
pub fn files_under(dir: &Path) -> Vec<PathBuf> {
    fn walk(base: &Path, dir: &Path, out: &mut Vec<PathBuf>) {
        for entry in std::fs::read_dir(dir).expect("readable dir") {
            let path = entry.expect("dir entry").path();
            if path.is_dir() {
                walk(base, &path, out);
            } else {
                out.push(path.strip_prefix(base).expect("under base").to_path_buf());
            }
        }
    }
    let mut out = Vec::new();
    walk(dir, dir, &mut out);
    out.sort();
    out
}

pub fn read_lines(path: &Path) -> Vec<String> {
    std::fs::read_to_string(path)
        .expect("readable output")
        .lines()
        .map(str::to_string)
        .collect()
}
pub mod oracles;

/// Values of the denylisted columns of a fixture records file.
pub fn denylisted_values(records_csv: &Path) -> Vec<String> {
    let mut reader = csv::Reader::from_path(records_csv).expect("records csv");
    let header: Vec<String> = reader.headers().expect("header").iter().map(str::to_string).collect();
    let columns: Vec<usize> = header
        .iter()
        .enumerate()
        .filter(|(_, h)| foodcorpus::fixture::FIXTURE_DENYLIST.contains(&h.as_str()))
        .map(|(i, _)| i)
        .collect();
    assert_eq!(columns.len(), foodcorpus::fixture::FIXTURE_DENYLIST.len());
    let mut values = std::collections::BTreeSet::new();
    for row in reader.records() {
        let row = row.expect("csv row");
        for &c in &columns {
            if !row[c].is_empty() {
                values.insert(row[c].to_string());
            }
        }
    }
    values.into_iter().collect()
}

/// Relative paths whose contents differ between two output trees, ignoring
/// `skip`. Missing files count as differences.
pub fn differing_files(a: &Path, b: &Path, skip: &[&str]) -> Vec<PathBuf> {
    let fa = files_under(a);
    let fb = files_under(b);
    let all: std::collections::BTreeSet<&PathBuf> = fa.iter().chain(&fb).collect();
    all.into_iter()
        .filter(|rel| !skip.iter().any(|s| Path::new(s) == rel.as_path()))
        .filter(|rel| std::fs::read(a.join(rel)).ok() != std::fs::read(b.join(rel)).ok())
        .cloned()
        .collect()
}

const PIECES: [&str; 8] = ["牛", "奶", "粉", "铅", "汞", "面包", "牛奶", "大米"];

fn entity<R: Rng>(rng: &mut R) -> String {
    (0..rng.gen_range(1..=3)).map(|_| *PIECES.choose(rng).unwrap()).collect()
}

pub fn random_graph(seed: u64, max_triples: usize) -> foodcorpus::kg::KnowledgeGraph {
    let mut rng = foodcorpus::seed::stream(seed, &["kg-graph"]);
    let n = rng.gen_range(1..=max_triples);
    let triples = (0..n).map(|i| {
        foodcorpus::kg::Triple::new(
            entity(&mut rng),
            format!("p{}", rng.gen_range(0..4)),
            entity(&mut rng),
            format!("r{i}"),
        )
    });
    foodcorpus::kg::KnowledgeGraph::from_triples(triples)
}

pub fn random_query<R: Rng>(rng: &mut R) -> String {
    (0..rng.gen_range(0..6))
        .map(|_| if rng.gen_bool(0.3) { "的限量是".to_string() } else { entity(rng) })
        .collect()
}
