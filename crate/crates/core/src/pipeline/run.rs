//! Stage execution. Each stage reads its inputs from the config or from
//! files written by earlier stages, and writes its outputs atomically.

use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::json;
use thiserror::Error;

use super::config::{ExtractorKind, PipelineConfig, ScorerKind};
use super::report::{RunReport, StageReport};
use crate::document::{
    attach_prefix, extract_document_name, generate_prefix, ingest_auxiliary, ingest_documents, split_chapters,
    wrap_at_sentences, DocumentName, NameExtractor, PatternExtractor, PrefixedChapter, RawDocument, Skip, SourceKind,
    WireExtractor,
};
use crate::example::{dedup_by_text, write_jsonl, Meta, Source, TrainingExample};
use crate::generator::{FallbackGenerator, GeneratorClient, HttpGenerator};
use crate::instruct::{
    build_instruction_dataset, load_forum_posts, load_seed_instructions, normalize_instruction, select_forum_answers,
    EvolveConfig, ForumPolicy, InstructionPair,
};
use crate::kg::{answer_query, build_graph, load_triples, save_triples, KgSchema, KnowledgeGraph, PromptBundle, PromptTemplate, QuerySettings};
use crate::quality::{
    filter_chapter, segment_sentences, train_ngram, ExternalScorer, MaxScorer, NgramModel, NgramScorer,
    PerplexityScorer, ScoreError, Sentence,
};
use crate::seed::{content_id, stream};
use crate::structured::{
    build_datav1, build_datav2, group_records, load_records, merge_fields, redact, Datav2Error, MergeSpec,
    RedactionSpec, StructuredRecord,
};

pub const CORPUS_FILE: &str = "corpus.jsonl";
pub const INSTRUCTIONS_FILE: &str = "instructions.jsonl";
pub const GRAPH_FILE: &str = "graph.jsonl";
pub const REPORT_FILE: &str = "report.json";
pub const TIMINGS_FILE: &str = "timings.json";
pub const CHAPTERS_FILE: &str = "stages/chapters.jsonl";
pub const AUXILIARY_FILE: &str = "stages/auxiliary.jsonl";
pub const STANDARD_FILE: &str = "stages/standard.jsonl";
pub const FILTER_AUDIT_FILE: &str = "stages/filter_audit.jsonl";
pub const MODEL_FILE: &str = "stages/ngram.model";
pub const STRUCTURED_FILE: &str = "stages/structured.jsonl";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stage {
    IngestDocs,
    Filter,
    SerializeStructured,
    EmitCorpus,
    BuildInstructions,
    BuildKg,
}

impl Stage {
    pub const ORDER: [Stage; 6] = [
        Stage::IngestDocs,
        Stage::Filter,
        Stage::SerializeStructured,
        Stage::EmitCorpus,
        Stage::BuildInstructions,
        Stage::BuildKg,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::IngestDocs => "ingest_docs",
            Stage::Filter => "filter",
            Stage::SerializeStructured => "serialize_structured",
            Stage::EmitCorpus => "emit_corpus",
            Stage::BuildInstructions => "build_instructions",
            Stage::BuildKg => "build_kg",
        }
    }
}

/// What an injected fault does.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FaultAction {
    /// Return an error.
    Fail,
    /// Kill the process without unwinding.
    Abort,
}

/// Crash injection for atomicity tests.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FaultPlan {
    /// Fire after the named output (relative path) is fully written to its
    /// temp file but before it is renamed into place.
    pub before_commit: Option<(String, FaultAction)>,
    /// Fire once the stage has committed its outputs.
    pub after_stage: Option<(Stage, FaultAction)>,
}

impl FaultPlan {
    fn fire(action: FaultAction, what: String) -> Result<(), PipelineError> {
        match action {
            FaultAction::Fail => Err(PipelineError::Injected(what)),
            FaultAction::Abort => std::process::abort(),
        }
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("stage {stage}: {message}")]
    Stage { stage: &'static str, message: String },
    #[error("injected fault: {0}")]
    Injected(String),
}

fn stage_err(stage: Stage, message: impl ToString) -> PipelineError {
    PipelineError::Stage {
        stage: stage.name(),
        message: message.to_string(),
    }
}

/// Reports produced by one stage, keyed by sub-stage name.
#[derive(Debug, Clone, Default)]
pub struct StageRun {
    pub reports: Vec<(String, StageReport)>,
    pub outputs: Vec<(String, usize)>,
    pub elapsed: Duration,
}

/// A validated config bound to a worker pool and a generator client.
pub struct Pipeline {
    config: PipelineConfig,
    pool: rayon::ThreadPool,
    client: Arc<dyn GeneratorClient>,
    faults: FaultPlan,
}

impl Pipeline {
    /// `config` must already be validated.
    pub fn new(config: PipelineConfig) -> Result<Self, PipelineError> {
        let client = default_client(&config);
        Self::with_client(config, client)
    }

    pub fn with_client(config: PipelineConfig, client: Arc<dyn GeneratorClient>) -> Result<Self, PipelineError> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.workers)
            .build()
            .map_err(|e| PipelineError::Stage {
                stage: "setup",
                message: e.to_string(),
            })?;
        Ok(Pipeline {
            config,
            pool,
            client,
            faults: FaultPlan::default(),
        })
    }

    pub fn with_faults(mut self, faults: FaultPlan) -> Self {
        self.faults = faults;
        self
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn output_path(&self, rel: &str) -> PathBuf {
        self.config.output_dir.join(rel)
    }

    /// Write `rel` under the output dir through a temp file and a rename, so
    /// the final path only ever holds a complete file.
    fn write_atomic(
        &self,
        rel: &str,
        body: impl FnOnce(&mut dyn Write) -> std::io::Result<()>,
    ) -> Result<(), PipelineError> {
        let path = self.output_path(rel);
        let io = |source| PipelineError::Io {
            path: path.clone(),
            source,
        };
        let dir = path.parent().expect("output path has a parent");
        std::fs::create_dir_all(dir).map_err(io)?;
        let mut temp = tempfile::Builder::new()
            .prefix(".partial-")
            .tempfile_in(dir)
            .map_err(io)?;
        {
            let mut out = BufWriter::new(temp.as_file_mut());
            body(&mut out).map_err(io)?;
            out.flush().map_err(io)?;
        }
        publish_permissions(temp.as_file()).map_err(io)?;
        temp.as_file().sync_all().map_err(io)?;
        if let Some((target, action)) = &self.faults.before_commit {
            if target == rel {
                FaultPlan::fire(*action, format!("before committing {rel}"))?;
            }
        }
        temp.persist(&path).map_err(|e| io(e.error))?;
        Ok(())
    }

    fn write_rows<T: Serialize>(&self, rel: &str, rows: &[T]) -> Result<usize, PipelineError> {
        self.write_atomic(rel, |w| write_jsonl(w, rows).map(|_| ()))?;
        Ok(rows.len())
    }

    fn read_rows<T: DeserializeOwned>(&self, stage: Stage, rel: &str) -> Result<Vec<T>, PipelineError> {
        let path = self.output_path(rel);
        let file = std::fs::File::open(&path)
            .map_err(|e| stage_err(stage, format!("reading {}: {e}", path.display())))?;
        let mut rows = Vec::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|source| PipelineError::Io {
                path: path.clone(),
                source,
            })?;
            let row = serde_json::from_str(&line)
                .map_err(|e| stage_err(stage, format!("{}:{}: {e}", path.display(), i + 1)))?;
            rows.push(row);
        }
        Ok(rows)
    }

    fn after_stage(&self, stage: Stage) -> Result<(), PipelineError> {
        match self.faults.after_stage {
            Some((s, action)) if s == stage => FaultPlan::fire(action, format!("after stage {}", stage.name())),
            _ => Ok(()),
        }
    }

    /// Run one stage by name.
    pub fn run_stage(&self, stage: Stage) -> Result<StageRun, PipelineError> {
        let start = Instant::now();
        let mut run = match stage {
            Stage::IngestDocs => self.ingest_docs(),
            Stage::Filter => self.filter(),
            Stage::SerializeStructured => self.serialize_structured(),
            Stage::EmitCorpus => self.emit_corpus(),
            Stage::BuildInstructions => self.build_instructions(),
            Stage::BuildKg => self.build_kg(),
        }?;
        run.elapsed = start.elapsed();
        self.after_stage(stage)?;
        Ok(run)
    }

    /// Every stage in order, then the report.
    pub fn run_all(&self) -> Result<RunReport, PipelineError> {
        let mut report = RunReport::new(&self.config);
        for stage in Stage::ORDER {
            let run = self.run_stage(stage)?;
            log::info!("stage {} finished in {:?}", stage.name(), run.elapsed);
            report.stages.extend(run.reports);
            report.outputs.extend(run.outputs);
            report
                .timings_ms
                .insert(stage.name().to_string(), run.elapsed.as_millis() as u64);
        }
        let json = serde_json::to_string_pretty(&report).expect("report serializes");
        self.write_atomic(REPORT_FILE, |w| w.write_all(json.as_bytes()))?;
        let timings = serde_json::to_string_pretty(&report.timings_ms).expect("timings serialize");
        self.write_atomic(TIMINGS_FILE, |w| w.write_all(timings.as_bytes()))?;
        Ok(report)
    }

    fn name_extractor(&self) -> Box<dyn NameExtractor> {
        match self.config.prefix.extractor {
            ExtractorKind::Pattern => {
                Box::new(PatternExtractor::new(&self.config.prefix.name_pattern).expect("validated"))
            }
            ExtractorKind::External => Box::new(WireExtractor::new(self.client.clone())),
        }
    }

    /// Split, name and prefix standard documents; split auxiliary sources
    /// into entries.
    pub fn ingest_docs(&self) -> Result<StageRun, PipelineError> {
        let stage = Stage::IngestDocs;
        let inputs = &self.config.inputs;
        let mut standard = StageReport::default();
        let mut chapters = Vec::new();
        if let Some(dir) = &inputs.standard_documents {
            let ingest = ingest_documents(dir, SourceKind::StandardDocument).map_err(|e| stage_err(stage, e))?;
            standard.ingested = ingest.documents.len() + ingest.skipped.len();
            standard.emitted = ingest.documents.len();
            standard.skipped = ingest.skipped.len();
            standard.skips = ingest.skipped;
            let rules = self.config.split_config();
            let templates = self.config.prefix_templates();
            let extractor = self.name_extractor();
            let master = self.config.seed();
            let outcomes: Vec<DocOutcome> = self.pool.install(|| {
                ingest
                    .documents
                    .par_iter()
                    .map(|doc| process_document(doc, &rules, &templates, extractor.as_ref(), master))
                    .collect()
            });
            for outcome in outcomes {
                if outcome.named {
                    standard.count("named_documents", 1);
                } else {
                    standard.count("fallback_prefixes", 1);
                }
                if let Some(w) = outcome.warning {
                    standard.warnings.push(w);
                }
                standard.count("chapters", outcome.chapters.len());
                chapters.extend(outcome.chapters);
            }
        }
        chapters.sort_by(|a, b| {
            (&a.chapter.doc_id, a.chapter.chapter_index).cmp(&(&b.chapter.doc_id, b.chapter.chapter_index))
        });
        let mut auxiliary = StageReport::default();
        let mut examples = Vec::new();
        let aux_inputs = [
            (SourceKind::Dictionary, &inputs.dictionary),
            (SourceKind::Tutorial, &inputs.tutorial),
            (SourceKind::SentimentNews, &inputs.sentiment_news),
            (SourceKind::Law, &inputs.law),
            (SourceKind::ExamQuestion, &inputs.exam_question),
        ];
        for (kind, dir) in aux_inputs {
            let Some(dir) = dir else { continue };
            let ingest = ingest_documents(dir, kind).map_err(|e| stage_err(stage, e))?;
            auxiliary.ingested += ingest.documents.len() + ingest.skipped.len();
            auxiliary.emitted += ingest.documents.len();
            auxiliary.skipped += ingest.skipped.len();
            auxiliary.skips.extend(ingest.skipped);
            for doc in &ingest.documents {
                let out = ingest_auxiliary(doc).expect("auxiliary kind");
                auxiliary.count(kind.as_str(), out.examples.len());
                auxiliary.count("entry_skips", out.skipped.len());
                auxiliary.skips.extend(out.skipped);
                examples.extend(out.examples);
            }
        }
        let outputs = vec![
            (CHAPTERS_FILE.to_string(), self.write_rows(CHAPTERS_FILE, &chapters)?),
            (AUXILIARY_FILE.to_string(), self.write_rows(AUXILIARY_FILE, &examples)?),
        ];
        Ok(StageRun {
            reports: vec![
                ("standard_documents".into(), standard),
                ("auxiliary_documents".into(), auxiliary),
            ],
            outputs,
            elapsed: Duration::ZERO,
        })
    }

    fn build_scorer(&self, chapters: &[PrefixedChapter]) -> Result<Option<Box<dyn PerplexityScorer>>, PipelineError> {
        let f = &self.config.filter;
        let ngram = || -> Result<Option<Box<dyn PerplexityScorer>>, PipelineError> {
            let model = if let Some(path) = &f.model_path {
                let file = std::fs::File::open(path).map_err(|source| PipelineError::Io {
                    path: path.clone(),
                    source,
                })?;
                NgramModel::load(BufReader::new(file)).map_err(|e| stage_err(Stage::Filter, e))?
            } else {
                let texts: Vec<String> = match &f.train_path {
                    Some(path) => vec![std::fs::read_to_string(path).map_err(|source| PipelineError::Io {
                        path: path.clone(),
                        source,
                    })?],
                    None => chapters.iter().map(|c| c.chapter.text.clone()).collect(),
                };
                let sentences: Vec<Sentence> = texts
                    .iter()
                    .flat_map(|t| segment_sentences(t, &f.segmentation))
                    .collect();
                let corpus: Vec<Vec<&str>> = sentences
                    .iter()
                    .map(|s| f.tokenizer.tokenize(&s.text))
                    .filter(|t| !t.is_empty())
                    .collect();
                if corpus.is_empty() {
                    return Ok(None);
                }
                let model = train_ngram(&corpus, f.n, f.k).map_err(|e| stage_err(Stage::Filter, e))?;
                let mut buf = Vec::new();
                model.save(&mut buf).expect("in-memory write");
                self.write_atomic(MODEL_FILE, |w| w.write_all(&buf))?;
                model
            };
            Ok(Some(Box::new(NgramScorer::new(model, f.tokenizer))))
        };
        let external = || Box::new(ExternalScorer::new(self.client.clone())) as Box<dyn PerplexityScorer>;
        Ok(match f.scorer {
            ScorerKind::Ngram => ngram()?,
            ScorerKind::External => Some(external()),
            ScorerKind::Max => {
                let mut members = vec![external()];
                members.extend(ngram()?);
                Some(Box::new(MaxScorer::new(members)))
            }
        })
    }

    /// Drop high-perplexity sentences from chapter bodies and emit standard
    /// chapter examples.
    pub fn filter(&self) -> Result<StageRun, PipelineError> {
        let chapters: Vec<PrefixedChapter> = self.read_rows(Stage::Filter, CHAPTERS_FILE)?;
        let scorer = if self.config.filter.enabled {
            self.build_scorer(&chapters)?
        } else {
            None
        };
        let policy = self.config.filter.threshold_policy();
        let seg = &self.config.filter.segmentation;
        let max_chars = self.config.split.max_chars;
        let outcomes: Vec<ChapterOutcome> = self.pool.install(|| {
            chapters
                .par_iter()
                .map(|c| filter_one(c, scorer.as_deref(), policy, seg, max_chars))
                .collect()
        });
        let mut report = StageReport {
            ingested: chapters.len(),
            ..Default::default()
        };
        let mut examples = Vec::new();
        let mut audit = Vec::new();
        for (chapter, outcome) in chapters.iter().zip(outcomes) {
            report.count("sentences", outcome.sentences);
            report.filtered_sentences += outcome.removed.len();
            if let Some(err) = outcome.error {
                if matches!(err, ScoreError::Generator(_)) {
                    report.generator_failures += 1;
                }
                report.warnings.push(format!(
                    "{} chapter {}: left unfiltered: {err}",
                    chapter.chapter.doc_id, chapter.chapter.chapter_index
                ));
            }
            if !outcome.removed.is_empty() {
                audit.push(json!({
                    "doc_id": chapter.chapter.doc_id,
                    "chapter_index": chapter.chapter.chapter_index,
                    "threshold_used": outcome.threshold,
                    "removed": outcome.removed,
                }));
            }
            if outcome.examples.is_empty() {
                report.skip(Skip::new(
                    format!("{}#{}", chapter.chapter.doc_id, chapter.chapter.chapter_index),
                    "chapter empty after filtering",
                ));
            } else {
                report.emitted += 1;
                report.count("examples", outcome.examples.len());
                examples.extend(outcome.examples);
            }
        }
        let outputs = vec![
            (STANDARD_FILE.to_string(), self.write_rows(STANDARD_FILE, &examples)?),
            (FILTER_AUDIT_FILE.to_string(), self.write_rows(FILTER_AUDIT_FILE, &audit)?),
        ];
        Ok(StageRun {
            reports: vec![("filter".into(), report)],
            outputs,
            elapsed: Duration::ZERO,
        })
    }

    fn redaction_spec(&self, denylist: &[String]) -> RedactionSpec {
        let patterns: Vec<&str> = self.config.redaction.value_patterns.iter().map(String::as_str).collect();
        RedactionSpec::new(denylist.iter().map(String::as_str), &patterns).expect("validated")
    }

    /// Load, redact and merge every structured record file.
    fn prepare_records(&self, stage: Stage) -> Result<(Vec<StructuredRecord>, StageReport), PipelineError> {
        let redaction = self.redaction_spec(&self.config.redaction.denylist);
        let merges = MergeSpec::new(self.config.merge.clone()).expect("validated");
        let mut report = StageReport::default();
        let mut records = Vec::new();
        for path in &self.config.inputs.structured {
            let load = load_records(path).map_err(|e| stage_err(stage, e))?;
            report.ingested += load.records.len() + load.skipped.len();
            report.skipped += load.skipped.len();
            report.skips.extend(load.skipped);
            for record in &load.records {
                match merge_fields(&redact(record, &redaction), &merges) {
                    Ok((merged, warnings)) => {
                        report.warnings.extend(warnings);
                        records.push(merged);
                    }
                    Err(e) => report.skip(Skip::new(&record.record_id, e.to_string())),
                }
            }
        }
        report.emitted = records.len();
        records.sort_by(|a, b| a.record_id.cmp(&b.record_id));
        Ok((records, report))
    }

    /// Datav1 and Datav2 examples from structured records.
    pub fn serialize_structured(&self) -> Result<StageRun, PipelineError> {
        let (records, prepared) = self.prepare_records(Stage::SerializeStructured)?;
        let scrub = self.redaction_spec(&[]);
        let mut examples = Vec::new();

        let mut v1 = StageReport::default();
        if self.config.datav1.enabled {
            let cfg = self.config.datav1.to_config();
            v1.ingested = records.len();
            let (groups, skips) = group_records(&records, &cfg);
            for s in skips {
                v1.skip(s);
            }
            for group in groups {
                match build_datav1(&group, &cfg) {
                    Ok(example) => {
                        v1.emitted += group.len();
                        v1.count("examples", 1);
                        let mut meta = Meta::new();
                        meta.insert("record_ids".into(), json!(example.record_ids));
                        examples.push(TrainingExample::new(Source::Datav1, scrub.scrub(&example.render()), meta));
                    }
                    Err(e) => {
                        for r in &group {
                            v1.skip(Skip::new(&r.record_id, e.to_string()));
                        }
                    }
                }
            }
        }

        let mut v2 = StageReport::default();
        if self.config.datav2.enabled {
            let k = self.config.datav2.texts_per_record;
            let q = self.config.datav2.q;
            let master = self.config.seed();
            let client = self.client.as_ref();
            let results: Vec<Result<Vec<TrainingExample>, Datav2Error>> = self.pool.install(|| {
                records
                    .par_iter()
                    .map(|r| build_datav2(r, k, q, client, &mut stream(master, &["datav2", &r.record_id])))
                    .collect()
            });
            v2.ingested = records.len();
            for (record, result) in records.iter().zip(results) {
                match result {
                    Ok(texts) => {
                        v2.emitted += 1;
                        v2.count("examples", texts.len());
                        examples.extend(texts.into_iter().map(|mut e| {
                            let clean = scrub.scrub(&e.text);
                            if clean != e.text {
                                e = TrainingExample::new(e.source, clean, e.meta);
                            }
                            e
                        }));
                    }
                    Err(e) => {
                        if matches!(e, Datav2Error::Generator { .. }) {
                            v2.generator_failures += 1;
                        }
                        v2.skip(Skip::new(&record.record_id, e.to_string()));
                    }
                }
            }
        }
        let outputs = vec![(STRUCTURED_FILE.to_string(), self.write_rows(STRUCTURED_FILE, &examples)?)];
        Ok(StageRun {
            reports: vec![
                ("structured_records".into(), prepared),
                ("datav1".into(), v1),
                ("datav2".into(), v2),
            ],
            outputs,
            elapsed: Duration::ZERO,
        })
    }

    /// Concatenate stage outputs, dedup corpus-wide and write the corpus.
    pub fn emit_corpus(&self) -> Result<StageRun, PipelineError> {
        let mut rows: Vec<TrainingExample> = Vec::new();
        let handoffs = [
            (STANDARD_FILE, Stage::Filter),
            (STRUCTURED_FILE, Stage::SerializeStructured),
            (AUXILIARY_FILE, Stage::IngestDocs),
        ];
        for (rel, producer) in handoffs {
            if !self.output_path(rel).exists() {
                return Err(stage_err(
                    Stage::EmitCorpus,
                    format!("{rel} is missing; run {} first", producer.name()),
                ));
            }
            rows.extend(self.read_rows::<TrainingExample>(Stage::EmitCorpus, rel)?);
        }
        let mut report = StageReport {
            ingested: rows.len(),
            ..Default::default()
        };
        let (valid, empty): (Vec<_>, Vec<_>) = rows.into_iter().partition(|e| !e.text.trim().is_empty());
        for e in empty {
            report.skip(Skip::new(&e.id, "empty text"));
        }
        let kept = if self.config.dedup {
            let (kept, removed) = dedup_by_text(valid);
            report.skipped += removed;
            report.count("duplicates", removed);
            kept
        } else {
            valid
        };
        report.emitted = kept.len();
        for e in &kept {
            report.count(e.source.as_str(), 1);
        }
        let n = self.write_rows(CORPUS_FILE, &kept)?;
        Ok(StageRun {
            reports: vec![("corpus".into(), report)],
            outputs: vec![(CORPUS_FILE.to_string(), n)],
            elapsed: Duration::ZERO,
        })
    }

    /// Forum selection, seed loading and evolution.
    pub fn build_instructions(&self) -> Result<StageRun, PipelineError> {
        let stage = Stage::BuildInstructions;
        let ins = &self.config.instructions;
        let mut report = StageReport::default();
        let mut sources: Vec<InstructionPair> = Vec::new();
        if let Some(path) = &self.config.inputs.seeds {
            let load = load_seed_instructions(path).map_err(|e| stage_err(stage, e))?;
            report.count("seed_count", load.count());
            report.count("seed_lines_skipped", load.skipped.len());
            report.warnings.extend(load.warning);
            report.skips.extend(load.skipped);
            sources.extend(load.pairs);
        }
        if let Some(path) = &self.config.inputs.forum {
            let (posts, skipped) = load_forum_posts(path).map_err(|e| stage_err(stage, e))?;
            report.count("forum_posts", posts.len());
            report.count("forum_lines_skipped", skipped.len());
            report.skips.extend(skipped);
            let selected = select_forum_answers(
                &posts,
                ForumPolicy {
                    min_post_count: ins.min_post_count,
                    top_m: ins.top_m,
                },
            );
            report.count("forum_selected", selected.len());
            sources.extend(selected);
        }
        report.ingested = sources.len();
        let mut seen = std::collections::HashSet::new();
        let unique = sources
            .iter()
            .filter(|p| seen.insert(normalize_instruction(&p.instruction)))
            .count();
        report.emitted = unique;
        report.skipped = sources.len() - unique;
        let config = EvolveConfig {
            rounds: ins.rounds,
            operators: ins.evol_operators().expect("validated"),
            evolve_forum: ins.evolve_forum,
            max_in_flight: ins.max_in_flight,
        };
        let build = build_instruction_dataset(sources, &config, self.client.as_ref(), self.config.seed());
        report.generator_failures = build.failures.len();
        report.count("evolved", build.pairs.len() - unique);
        report.count("evolution_duplicates", build.duplicates - report.skipped);
        report.count("pairs", build.pairs.len());
        for f in &build.failures {
            report
                .warnings
                .push(format!("evolving {} with {}: {}", f.parent, f.operator.as_str(), f.reason));
        }
        let n = self.write_rows(INSTRUCTIONS_FILE, &build.pairs)?;
        Ok(StageRun {
            reports: vec![("instructions".into(), report)],
            outputs: vec![(INSTRUCTIONS_FILE.to_string(), n)],
            elapsed: Duration::ZERO,
        })
    }

    fn kg_schema(&self, records: &[StructuredRecord]) -> KgSchema {
        let kg = &self.config.kg;
        let predicates = if kg.predicates.is_empty() {
            let mut all = indexmap::IndexMap::new();
            for r in records {
                for name in r.fields.keys() {
                    if *name != kg.subject_field && !all.contains_key(name) {
                        all.insert(name.clone(), name.clone());
                    }
                }
            }
            all
        } else {
            kg.predicates.clone()
        };
        KgSchema {
            subject_field: kg.subject_field.clone(),
            predicates,
        }
    }

    /// Triples from redacted records plus the text-derived triples file.
    pub fn build_kg(&self) -> Result<StageRun, PipelineError> {
        let stage = Stage::BuildKg;
        let (records, _) = self.prepare_records(stage)?;
        let schema = self.kg_schema(&records);
        let (graph, skips) = build_graph(&records, &schema);
        let mut report = StageReport {
            ingested: records.len(),
            emitted: records.len() - skips.len(),
            ..Default::default()
        };
        report.skipped = skips.len();
        report.skips = skips;
        report.count("record_triples", graph.len());
        let mut graph = graph;
        if let Some(path) = &self.config.inputs.triples {
            let file = std::fs::File::open(path).map_err(|source| PipelineError::Io {
                path: path.clone(),
                source,
            })?;
            let (triples, skipped) = load_triples(BufReader::new(file)).map_err(|source| PipelineError::Io {
                path: path.clone(),
                source,
            })?;
            report.count("text_triples", triples.len());
            report.count("text_triple_lines_skipped", skipped.len());
            report.skips.extend(skipped);
            graph = graph.extended(triples);
        }
        report.count("triples", graph.len());
        report.count("entities", graph.vocabulary().len());
        self.write_atomic(GRAPH_FILE, |w| save_triples(&graph, w).map(|_| ()))?;
        Ok(StageRun {
            reports: vec![("kg".into(), report)],
            outputs: vec![(GRAPH_FILE.to_string(), graph.len())],
            elapsed: Duration::ZERO,
        })
    }

    pub fn query_settings(&self) -> QuerySettings {
        QuerySettings {
            limit: self.config.kg.limit,
            template: PromptTemplate::new(self.config.kg.prompt_template.clone()).expect("validated"),
        }
    }

    /// The graph written by `build_kg`.
    pub fn load_graph(&self) -> Result<KnowledgeGraph, PipelineError> {
        let path = self.output_path(GRAPH_FILE);
        let file = std::fs::File::open(&path)
            .map_err(|e| stage_err(Stage::BuildKg, format!("reading {}: {e} (run build-kg first)", path.display())))?;
        let (triples, _) = load_triples(BufReader::new(file)).map_err(|source| PipelineError::Io { path, source })?;
        Ok(KnowledgeGraph::from_triples(triples))
    }

    pub fn query_kg(&self, query: &str) -> Result<PromptBundle, PipelineError> {
        Ok(answer_query(&self.load_graph()?, query, &self.query_settings()))
    }
}

/// Offline fallback unless an endpoint is configured and fallback is off.
pub fn default_client(config: &PipelineConfig) -> Arc<dyn GeneratorClient> {
    let g = &config.generator;
    match (&g.endpoint, g.fallback) {
        (Some(endpoint), false) => Arc::new(
            HttpGenerator::new(endpoint.clone())
                .with_retries(g.retries)
                .with_backoff(Duration::from_millis(g.backoff_ms))
                .with_timeout(Duration::from_millis(g.timeout_ms)),
        ),
        _ => Arc::new(FallbackGenerator),
    }
}

/// `run_all` on an already validated config with the default client.
pub fn run_pipeline(config: PipelineConfig) -> Result<RunReport, PipelineError> {
    Pipeline::new(config)?.run_all()
}

/// Write examples as JSONL to `path` atomically; returns the line count.
pub fn emit_corpus(examples: &[TrainingExample], path: &Path) -> std::io::Result<usize> {
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir)?;
    let mut temp = tempfile::Builder::new().prefix(".partial-").tempfile_in(dir)?;
    let n = write_jsonl(BufWriter::new(temp.as_file_mut()), examples)?;
    publish_permissions(temp.as_file())?;
    temp.persist(path).map_err(|e| e.error)?;
    Ok(n)
}

/// Temp files are created owner-only; outputs get ordinary file modes.
fn publish_permissions(file: &std::fs::File) -> std::io::Result<()> {
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        file.set_permissions(std::fs::Permissions::from_mode(0o644))?;
    }
    #[cfg(not(unix))]
    let _ = file;
    Ok(())
}

struct DocOutcome {
    chapters: Vec<PrefixedChapter>,
    named: bool,
    warning: Option<String>,
}

/// Chapters of one document with their prefixes. The prefix stream is keyed
/// by document content, so identical documents get identical prefixes.
fn process_document(
    doc: &RawDocument,
    rules: &crate::document::SplitConfig,
    templates: &crate::document::PrefixTemplates,
    extractor: &dyn NameExtractor,
    master: u64,
) -> DocOutcome {
    let (name, warning): (Option<DocumentName>, Option<String>) = match extract_document_name(&doc.text, extractor) {
        Ok(name) => (name, None),
        Err(e) => (None, Some(format!("{}: name extraction failed: {e}", doc.doc_id))),
    };
    let mut rng = stream(master, &["prefix", &content_id(&[&doc.text])]);
    let chapters = split_chapters(doc, rules)
        .into_iter()
        .map(|chapter| {
            let prefix = match &name {
                Some(n) => generate_prefix(n, templates, &mut rng),
                None => templates.fallback(&doc.doc_id),
            };
            attach_prefix(chapter, prefix, name.clone()).expect("templates yield non-empty prefixes")
        })
        .collect();
    DocOutcome {
        chapters,
        named: name.is_some(),
        warning,
    }
}

struct ChapterOutcome {
    sentences: usize,
    removed: Vec<Sentence>,
    threshold: Option<f64>,
    error: Option<ScoreError>,
    examples: Vec<TrainingExample>,
}

fn filter_one(
    c: &PrefixedChapter,
    scorer: Option<&dyn PerplexityScorer>,
    policy: crate::quality::ThresholdPolicy,
    seg: &crate::quality::SegmentConfig,
    max_chars: usize,
) -> ChapterOutcome {
    let sentences = segment_sentences(&c.chapter.text, seg);
    let n = sentences.len();
    let (body, removed, threshold, error) = match scorer {
        None => (c.chapter.text.clone(), vec![], None, None),
        Some(scorer) => match filter_chapter(sentences, scorer, policy) {
            Ok(report) => (report.kept_text(), report.removed, report.threshold_used, None),
            Err(e) => (c.chapter.text.clone(), vec![], None, Some(e)),
        },
    };
    let full = format!("{}{}", c.chapter.heading, body);
    let pieces: Vec<String> = if full.trim().is_empty() {
        vec![]
    } else {
        wrap_at_sentences(&full, max_chars, seg)
            .into_iter()
            .filter(|p| !p.trim().is_empty())
            .collect()
    };
    let total = pieces.len();
    let examples = pieces
        .into_iter()
        .enumerate()
        .map(|(i, piece)| {
            let mut meta = Meta::new();
            meta.insert("doc_id".into(), json!(c.chapter.doc_id));
            meta.insert("chapter_index".into(), json!(c.chapter.chapter_index));
            if total > 1 {
                meta.insert("piece_index".into(), json!(i));
                meta.insert("pieces".into(), json!(total));
            }
            if let Some(name) = &c.document_name {
                meta.insert("document_name".into(), json!(name.raw));
            }
            meta.insert("removed_sentences".into(), json!(removed.len()));
            let text = format!("{}{}{}", c.prefix, crate::document::PREFIX_SEPARATOR, piece);
            TrainingExample::new(Source::StandardChapter, text, meta)
        })
        .collect();
    ChapterOutcome {
        sentences: n,
        removed,
        threshold,
        error,
        examples,
    }
}
