//! End-to-end orchestration from one config file.
//!
//! Stages hand off through files under the output directory, so each can
//! run on its own: `ingest_docs` writes chapters and auxiliary entries,
//! `filter` turns chapters into standard examples, `serialize_structured`
//! writes Datav1/Datav2 examples, `emit_corpus` dedups everything into the
//! corpus, then `build_instructions` and `build_kg` write their datasets.

mod config;
mod report;
mod run;

pub use config::{
    load_config, validate_config, ConfigError, Datav1Settings, Datav2Settings, ExtractorKind, FilterSettings,
    GeneratorSettings, Inputs, InstructionSettings, KgSettings, PipelineConfig, PolicyKind, PrefixSettings,
    RedactionSettings, ScorerKind, SplitSettings, Violation,
};
pub use report::{canonical_config, config_hash, RunReport, StageReport};
pub use run::{
    default_client, emit_corpus, run_pipeline, FaultAction, FaultPlan, Pipeline, PipelineError, Stage, StageRun,
    AUXILIARY_FILE, CHAPTERS_FILE, CORPUS_FILE, FILTER_AUDIT_FILE, GRAPH_FILE, INSTRUCTIONS_FILE, MODEL_FILE,
    REPORT_FILE, STANDARD_FILE, STRUCTURED_FILE, TIMINGS_FILE,
};
