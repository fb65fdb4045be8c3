//! Pipeline configuration file (TOML).
//!
//! Every section is optional except the top-level `seed`. Unknown keys are
//! rejected. Relative paths resolve against the config file's directory.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::document::{PrefixTemplates, SplitConfig, DEFAULT_CODE_PATTERN, DEFAULT_HEADING_PATTERNS};
use crate::instruct::{EvolOperator, OperatorKind};
use crate::kg::{PromptTemplate, DEFAULT_LIMIT, DEFAULT_PROMPT_TEMPLATE};
use crate::quality::{SegmentConfig, ThresholdPolicy, Tokenizer};
use crate::structured::{Merge, MergeSpec};

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: Option<u64>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Worker threads; 0 uses one per core. Outputs do not depend on it.
    #[serde(default)]
    pub workers: usize,
    /// Drop corpus rows whose text duplicates an earlier row.
    #[serde(default = "yes")]
    pub dedup: bool,
    #[serde(default)]
    pub inputs: Inputs,
    #[serde(default)]
    pub split: SplitSettings,
    #[serde(default)]
    pub prefix: PrefixSettings,
    #[serde(default)]
    pub filter: FilterSettings,
    #[serde(default)]
    pub redaction: RedactionSettings,
    #[serde(default)]
    pub merge: Vec<Merge>,
    #[serde(default)]
    pub datav1: Datav1Settings,
    #[serde(default)]
    pub datav2: Datav2Settings,
    #[serde(default)]
    pub instructions: InstructionSettings,
    #[serde(default)]
    pub kg: KgSettings,
    #[serde(default)]
    pub generator: GeneratorSettings,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Inputs {
    pub standard_documents: Option<PathBuf>,
    pub dictionary: Option<PathBuf>,
    pub tutorial: Option<PathBuf>,
    pub sentiment_news: Option<PathBuf>,
    pub law: Option<PathBuf>,
    pub exam_question: Option<PathBuf>,
    #[serde(default)]
    pub structured: Vec<PathBuf>,
    pub forum: Option<PathBuf>,
    pub seeds: Option<PathBuf>,
    /// Text-derived triples (JSONL `{s, p, o, provenance}`).
    pub triples: Option<PathBuf>,
}

impl Inputs {
    pub const KEYS: [&'static str; 10] = [
        "standard_documents",
        "dictionary",
        "tutorial",
        "sentiment_news",
        "law",
        "exam_question",
        "structured",
        "forum",
        "seeds",
        "triples",
    ];

    fn slot(&mut self, key: &str) -> Option<&mut Option<PathBuf>> {
        Some(match key {
            "standard_documents" => &mut self.standard_documents,
            "dictionary" => &mut self.dictionary,
            "tutorial" => &mut self.tutorial,
            "sentiment_news" => &mut self.sentiment_news,
            "law" => &mut self.law,
            "exam_question" => &mut self.exam_question,
            "forum" => &mut self.forum,
            "seeds" => &mut self.seeds,
            "triples" => &mut self.triples,
            _ => return None,
        })
    }

    /// Keep only the given inputs, replacing their paths.
    pub fn restrict(&mut self, only: &[(String, PathBuf)]) -> Result<(), String> {
        let mut next = Inputs::default();
        for (key, path) in only {
            if key == "structured" {
                next.structured.push(path.clone());
            } else {
                *next.slot(key).ok_or_else(|| format!("unknown input key {key:?}"))? = Some(path.clone());
            }
        }
        *self = next;
        Ok(())
    }

    fn paths(&self) -> Vec<(String, &PathBuf, bool)> {
        let dirs = [
            ("standard_documents", &self.standard_documents),
            ("dictionary", &self.dictionary),
            ("tutorial", &self.tutorial),
            ("sentiment_news", &self.sentiment_news),
            ("law", &self.law),
            ("exam_question", &self.exam_question),
        ];
        let files = [("forum", &self.forum), ("seeds", &self.seeds), ("triples", &self.triples)];
        let mut out: Vec<(String, &PathBuf, bool)> = dirs
            .into_iter()
            .filter_map(|(k, p)| p.as_ref().map(|p| (format!("inputs.{k}"), p, true)))
            .collect();
        out.extend(
            files
                .into_iter()
                .filter_map(|(k, p)| p.as_ref().map(|p| (format!("inputs.{k}"), p, false))),
        );
        out.extend(
            self.structured
                .iter()
                .enumerate()
                .map(|(i, p)| (format!("inputs.structured[{i}]"), p, false)),
        );
        out
    }

    fn resolve(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for key in Inputs::KEYS {
            if let Some(Some(p)) = self.slot(key) {
                fix(p);
            }
        }
        self.structured.iter_mut().for_each(fix);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitSettings {
    pub heading_patterns: Vec<String>,
    /// Longest chapter body (in characters) emitted as one example; longer
    /// bodies are wrapped at sentence boundaries.
    pub max_chars: usize,
}

impl Default for SplitSettings {
    fn default() -> Self {
        SplitSettings {
            heading_patterns: DEFAULT_HEADING_PATTERNS.iter().map(|s| s.to_string()).collect(),
            max_chars: 2048,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtractorKind {
    #[default]
    Pattern,
    External,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PrefixSettings {
    pub templates: Vec<String>,
    pub fallback_template: String,
    pub extractor: ExtractorKind,
    pub name_pattern: String,
}

impl Default for PrefixSettings {
    fn default() -> Self {
        let defaults = PrefixTemplates::default();
        PrefixSettings {
            templates: defaults.templates().to_vec(),
            fallback_template: "【文档：{doc_id}】".to_string(),
            extractor: ExtractorKind::Pattern,
            name_pattern: DEFAULT_CODE_PATTERN.to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScorerKind {
    #[default]
    Ngram,
    External,
    /// Larger of the n-gram and external scores.
    Max,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    #[default]
    Percentile,
    Absolute,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FilterSettings {
    pub enabled: bool,
    pub scorer: ScorerKind,
    pub n: usize,
    pub k: f64,
    pub tokenizer: Tokenizer,
    pub policy: PolicyKind,
    pub percentile: f64,
    pub absolute_threshold: Option<f64>,
    /// Pre-trained count table; when absent a model is trained.
    pub model_path: Option<PathBuf>,
    /// Plain-text training corpus; defaults to the standard documents.
    pub train_path: Option<PathBuf>,
    pub segmentation: SegmentConfig,
}

impl Default for FilterSettings {
    fn default() -> Self {
        FilterSettings {
            enabled: true,
            scorer: ScorerKind::Ngram,
            n: 3,
            k: 0.5,
            tokenizer: Tokenizer::Mixed,
            policy: PolicyKind::Percentile,
            percentile: 90.0,
            absolute_threshold: None,
            model_path: None,
            train_path: None,
            segmentation: SegmentConfig::default(),
        }
    }
}

impl FilterSettings {
    pub fn threshold_policy(&self) -> ThresholdPolicy {
        match self.policy {
            PolicyKind::Percentile => ThresholdPolicy::Percentile(self.percentile),
            PolicyKind::Absolute => ThresholdPolicy::Absolute(self.absolute_threshold.unwrap_or(f64::NAN)),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RedactionSettings {
    pub denylist: Vec<String>,
    pub value_patterns: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Datav1Settings {
    pub enabled: bool,
    pub group_fields: Vec<String>,
    pub testing_item_key: String,
    pub item_fields: Vec<String>,
}

impl Default for Datav1Settings {
    fn default() -> Self {
        let d = crate::structured::Datav1Config::default();
        Datav1Settings {
            enabled: true,
            group_fields: d.group_fields,
            testing_item_key: d.testing_item_key,
            item_fields: d.item_fields,
        }
    }
}

impl Datav1Settings {
    pub fn to_config(&self) -> crate::structured::Datav1Config {
        crate::structured::Datav1Config {
            group_fields: self.group_fields.clone(),
            testing_item_key: self.testing_item_key.clone(),
            item_fields: self.item_fields.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Datav2Settings {
    pub enabled: bool,
    /// Texts generated per record.
    #[serde(rename = "K")]
    pub texts_per_record: usize,
    /// Probability that a field's second copy is used.
    pub q: f64,
}

impl Default for Datav2Settings {
    fn default() -> Self {
        Datav2Settings {
            enabled: true,
            texts_per_record: 2,
            q: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InstructionSettings {
    pub min_post_count: u64,
    pub top_m: usize,
    pub rounds: usize,
    pub operators: Vec<OperatorKind>,
    pub operator_templates: BTreeMap<OperatorKind, String>,
    pub evolve_forum: bool,
    pub max_in_flight: usize,
}

impl Default for InstructionSettings {
    fn default() -> Self {
        InstructionSettings {
            min_post_count: 0,
            top_m: 1,
            rounds: 1,
            operators: OperatorKind::ALL.to_vec(),
            operator_templates: BTreeMap::new(),
            evolve_forum: true,
            max_in_flight: 8,
        }
    }
}

impl InstructionSettings {
    pub fn evol_operators(&self) -> Result<Vec<EvolOperator>, String> {
        self.operators
            .iter()
            .map(|&kind| match self.operator_templates.get(&kind) {
                Some(t) => EvolOperator::new(kind, t.clone()).map_err(|e| e.to_string()),
                None => Ok(EvolOperator::builtin(kind)),
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KgSettings {
    pub subject_field: String,
    /// Field → predicate. Empty maps every other field to a predicate of
    /// the same name.
    pub predicates: IndexMap<String, String>,
    pub limit: usize,
    pub prompt_template: String,
}

impl Default for KgSettings {
    fn default() -> Self {
        KgSettings {
            subject_field: "食品名称".to_string(),
            predicates: IndexMap::new(),
            limit: DEFAULT_LIMIT,
            prompt_template: DEFAULT_PROMPT_TEMPLATE.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeneratorSettings {
    /// HTTP endpoint implementing the generator wire contract.
    pub endpoint: Option<String>,
    /// Use the deterministic offline generator instead of the endpoint.
    pub fallback: bool,
    pub retries: u32,
    pub backoff_ms: u64,
    pub timeout_ms: u64,
}

impl Default for GeneratorSettings {
    fn default() -> Self {
        GeneratorSettings {
            endpoint: None,
            fallback: true,
            retries: 3,
            backoff_ms: 200,
            timeout_ms: 60_000,
        }
    }
}

/// One failed check, addressed by its dotted key path.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub path: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading config {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parsing config: {0}")]
    Parse(String),
    #[error("invalid config:\n{}", .0.iter().map(|v| format!("  {v}")).collect::<Vec<_>>().join("\n"))]
    Invalid(Vec<Violation>),
}

impl ConfigError {
    pub fn violations(&self) -> &[Violation] {
        match self {
            ConfigError::Invalid(v) => v,
            _ => &[],
        }
    }
}

impl PipelineConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    /// Seed after validation.
    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or_default()
    }

    /// Make relative paths absolute against `base`.
    pub fn resolve_paths(&mut self, base: &Path) {
        self.inputs.resolve(base);
        if self.output_dir.is_relative() {
            self.output_dir = base.join(&self.output_dir);
        }
        for p in [&mut self.filter.model_path, &mut self.filter.train_path].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }

    /// Check every invariant and report all violations at once.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut v = Vec::new();
        let mut bad = |path: &str, message: String| {
            v.push(Violation {
                path: path.to_string(),
                message,
            })
        };
        if self.seed.is_none() {
            bad("seed", "master seed is required".into());
        }
        for (key, path, is_dir) in self.inputs.paths() {
            if is_dir && !path.is_dir() {
                bad(&key, format!("directory {} does not exist", path.display()));
            } else if !is_dir && !path.is_file() {
                bad(&key, format!("file {} does not exist", path.display()));
            }
        }
        if self.split.heading_patterns.is_empty() {
            bad("split.heading_patterns", "at least one heading pattern is required".into());
        }
        for (i, p) in self.split.heading_patterns.iter().enumerate() {
            if let Err(e) = regex::Regex::new(p) {
                bad(&format!("split.heading_patterns[{i}]"), e.to_string());
            }
        }
        if self.split.max_chars == 0 {
            bad("split.max_chars", "must be at least 1".into());
        }
        if let Err(e) = PrefixTemplates::new(self.prefix.templates.clone(), self.prefix.fallback_template.clone()) {
            bad("prefix.templates", e.to_string());
        }
        if let Err(e) = regex::Regex::new(&self.prefix.name_pattern) {
            bad("prefix.name_pattern", e.to_string());
        }
        let f = &self.filter;
        if f.n == 0 {
            bad("filter.n", "order must be at least 1".into());
        }
        if !(f.k.is_finite() && f.k > 0.0) {
            bad("filter.k", format!("smoothing must be positive, got {}", f.k));
        }
        match f.policy {
            PolicyKind::Percentile if !(f.percentile > 0.0 && f.percentile < 100.0) => {
                bad("filter.percentile", format!("must lie in (0, 100), got {}", f.percentile))
            }
            PolicyKind::Absolute if !f.absolute_threshold.is_some_and(|t| t.is_finite() && t > 0.0) => {
                bad("filter.absolute_threshold", "a positive threshold is required".into())
            }
            _ => {}
        }
        for (key, path) in [("filter.model_path", &f.model_path), ("filter.train_path", &f.train_path)] {
            if let Some(p) = path {
                if !p.is_file() {
                    bad(key, format!("file {} does not exist", p.display()));
                }
            }
        }
        let needs_endpoint = matches!(f.scorer, ScorerKind::External | ScorerKind::Max)
            || self.prefix.extractor == ExtractorKind::External
            || !self.generator.fallback;
        if needs_endpoint && self.generator.endpoint.is_none() {
            bad(
                "generator.endpoint",
                "an endpoint is required when the external generator, scorer or extractor is used".into(),
            );
        }
        for (i, p) in self.redaction.value_patterns.iter().enumerate() {
            if let Err(e) = regex::Regex::new(p) {
                bad(&format!("redaction.value_patterns[{i}]"), e.to_string());
            }
        }
        if let Err(e) = MergeSpec::new(self.merge.clone()) {
            bad("merge", e.to_string());
        }
        if self.datav1.group_fields.is_empty() {
            bad("datav1.group_fields", "at least one grouping field is required".into());
        }
        if self.datav1.group_fields.contains(&self.datav1.testing_item_key) {
            bad("datav1.testing_item_key", "must differ from the grouping fields".into());
        }
        if self.datav2.texts_per_record == 0 {
            bad("datav2.K", "must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.datav2.q) {
            bad("datav2.q", format!("must lie in [0, 1], got {}", self.datav2.q));
        }
        let ins = &self.instructions;
        if ins.top_m == 0 {
            bad("instructions.top_m", "must be at least 1".into());
        }
        if ins.max_in_flight == 0 {
            bad("instructions.max_in_flight", "must be at least 1".into());
        }
        if ins.rounds > 0 && ins.operators.is_empty() {
            bad("instructions.operators", "evolution rounds need at least one operator".into());
        }
        if let Err(e) = ins.evol_operators() {
            bad("instructions.operator_templates", e);
        }
        if self.kg.limit == 0 {
            bad("kg.limit", "must be at least 1".into());
        }
        if let Err(e) = PromptTemplate::new(self.kg.prompt_template.clone()) {
            bad("kg.prompt_template", e.to_string());
        }
        if v.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Invalid(v))
        }
    }

    pub fn split_config(&self) -> SplitConfig {
        SplitConfig::new(&self.split.heading_patterns).expect("validated")
    }

    pub fn prefix_templates(&self) -> PrefixTemplates {
        PrefixTemplates::new(self.prefix.templates.clone(), self.prefix.fallback_template.clone()).expect("validated")
    }
}

/// Read, resolve and validate a config file.
pub fn validate_config(path: &Path) -> Result<PipelineConfig, ConfigError> {
    load_config(path, |_| Ok(()))
}

/// Like [`validate_config`], applying `adjust` (command-line overrides)
/// before validation.
pub fn load_config(
    path: &Path,
    adjust: impl FnOnce(&mut PipelineConfig) -> Result<(), String>,
) -> Result<PipelineConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut config = PipelineConfig::parse(&text)?;
    adjust(&mut config).map_err(ConfigError::Parse)?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    config.resolve_paths(&base);
    config.validate()?;
    Ok(config)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_defaults() {
        let c = PipelineConfig::parse("seed = 1").unwrap();
        c.validate().unwrap();
        assert_eq!(c.filter.n, 3);
        assert_eq!(c.filter.k, 0.5);
        assert_eq!(c.filter.threshold_policy(), ThresholdPolicy::Percentile(90.0));
        assert_eq!(c.datav2.texts_per_record, 2);
        assert_eq!(c.kg.limit, 8);
        assert!(c.generator.fallback);
    }

    #[test]
    fn k_zero_named() {
        let c = PipelineConfig::parse("seed = 1\n[datav2]\nK = 0\n").unwrap();
        let err = c.validate().unwrap_err();
        assert_eq!(err.violations()[0].path, "datav2.K");
    }

    #[test]
    fn missing_path_named() {
        let c = PipelineConfig::parse("seed = 1\n[inputs]\nlaw = \"/no/such/dir\"\n").unwrap();
        let err = c.validate().unwrap_err();
        assert_eq!(err.violations()[0].path, "inputs.law");
    }

    #[test]
    fn all_violations_reported() {
        let text = "[filter]\npercentile = 100.0\nk = 0.0\n[datav2]\nq = 2.0\n[kg]\nlimit = 0\n";
        let err = PipelineConfig::parse(text).unwrap().validate().unwrap_err();
        let paths: Vec<&str> = err.violations().iter().map(|v| v.path.as_str()).collect();
        assert_eq!(paths, ["seed", "filter.k", "filter.percentile", "datav2.q", "kg.limit"]);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(matches!(PipelineConfig::parse("seed = 1\nbogus = 2"), Err(ConfigError::Parse(_))));
        assert!(PipelineConfig::parse("seed = 1\n[filter]\nnn = 2").is_err());
    }

    #[test]
    fn external_needs_endpoint() {
        let c = PipelineConfig::parse("seed = 1\n[filter]\nscorer = \"external\"\n").unwrap();
        assert_eq!(c.validate().unwrap_err().violations()[0].path, "generator.endpoint");
    }

    #[test]
    fn restrict_inputs() {
        let mut inputs = Inputs {
            law: Some("a".into()),
            tutorial: Some("b".into()),
            ..Default::default()
        };
        inputs.restrict(&[("law".into(), "c".into())]).unwrap();
        assert_eq!(inputs.law, Some("c".into()));
        assert_eq!(inputs.tutorial, None);
        assert!(inputs.restrict(&[("nope".into(), "x".into())]).is_err());
    }
}
