//! Run report written next to the outputs.

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::PipelineConfig;
use crate::document::Skip;

/// Item accounting for one stage. `ingested = emitted + skipped` holds for
/// every stage the pipeline produces.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub ingested: usize,
    pub emitted: usize,
    pub skipped: usize,
    pub filtered_sentences: usize,
    pub generator_failures: usize,
    /// Stage-specific counters.
    #[serde(default)]
    pub counts: IndexMap<String, usize>,
    #[serde(default)]
    pub warnings: Vec<String>,
    /// Per-item errors.
    #[serde(default)]
    pub skips: Vec<Skip>,
}

impl StageReport {
    pub fn reconciles(&self) -> bool {
        self.ingested == self.emitted + self.skipped
    }

    pub(crate) fn count(&mut self, key: &str, n: usize) {
        *self.counts.entry(key.to_string()).or_default() += n;
    }

    pub(crate) fn skip(&mut self, skip: Skip) {
        self.skipped += 1;
        self.skips.push(skip);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub seed: u64,
    pub config_hash: String,
    /// Effective config with defaults filled, as given by [`canonical_config`].
    pub config: PipelineConfig,
    pub stages: IndexMap<String, StageReport>,
    /// Output file → lines written.
    pub outputs: IndexMap<String, usize>,
    /// Wall-clock milliseconds per stage. Not serialized with the report,
    /// which stays byte-identical across runs; written to its own file.
    #[serde(skip)]
    pub timings_ms: IndexMap<String, u64>,
}

impl RunReport {
    pub fn new(config: &PipelineConfig) -> Self {
        RunReport {
            seed: config.seed(),
            config_hash: config_hash(config),
            config: canonical_config(config),
            stages: IndexMap::new(),
            outputs: IndexMap::new(),
            timings_ms: IndexMap::new(),
        }
    }
}

/// The config without settings that do not affect output content: the
/// worker count becomes 0 and the output dir becomes ".".
pub fn canonical_config(config: &PipelineConfig) -> PipelineConfig {
    let mut canonical = config.clone();
    canonical.workers = 0;
    canonical.output_dir = ".".into();
    canonical
}

/// SHA-256 of the canonical config as JSON.
pub fn config_hash(config: &PipelineConfig) -> String {
    let json = serde_json::to_string(&canonical_config(config)).expect("config serializes");
    hex::encode(Sha256::digest(json.as_bytes()))
}
