//! `foodcorpus` command line: run the whole pipeline or one stage from a
//! config file, query the knowledge graph, or write a demo fixture.

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use foodcorpus::fixture::{write_fixture, FixtureSpec};
use foodcorpus::kg::QueryServer;
use foodcorpus::pipeline::{load_config, FaultAction, FaultPlan, Pipeline, PipelineConfig, Stage};

#[derive(Parser)]
#[command(name = "foodcorpus", version, about = "Food-testing corpus construction pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Pipeline config file (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Override the master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the worker count (0 = one per core).
    #[arg(long)]
    workers: Option<usize>,
    /// Replace the configured inputs with these, e.g. `--only law=laws/`.
    /// Repeatable; unlisted inputs are disabled.
    #[arg(long, value_name = "KEY=PATH")]
    only: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Run every stage and write the run report.
    RunAll(Common),
    /// Split, name and prefix documents; split auxiliary sources.
    IngestDocs(Common),
    /// Perplexity-filter ingested chapters.
    Filter(Common),
    /// Redact, merge and serialize structured records.
    SerializeStructured(Common),
    /// Deduplicate stage outputs into the corpus.
    EmitCorpus(Common),
    /// Build the instruction dataset.
    BuildInstructions(Common),
    /// Build the knowledge graph.
    BuildKg(Common),
    /// Retrieve facts for a query and print the assembled prompt as JSON.
    QueryKg {
        #[command(flatten)]
        common: Common,
        /// Question text.
        query: String,
    },
    /// Serve `POST /query` over HTTP.
    ServeKg {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "127.0.0.1:8088")]
        addr: String,
    },
    /// Check a config file and print the effective config.
    Validate(Common),
    /// Write a synthetic input corpus with a matching config.
    MakeFixture {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value_t = 100)]
        documents: usize,
        #[arg(long, default_value_t = 1000)]
        records: usize,
        #[arg(long, default_value_t = 50)]
        forum_questions: usize,
        #[arg(long, default_value_t = 10)]
        seeds: usize,
    },
}

fn parse_only(only: &[String]) -> Result<Vec<(String, PathBuf)>, String> {
    only.iter()
        .map(|s| {
            s.split_once('=')
                .map(|(k, v)| (k.to_string(), PathBuf::from(v)))
                .ok_or_else(|| format!("--only expects KEY=PATH, got {s:?}"))
        })
        .collect()
}

fn load(common: &Common) -> Result<PipelineConfig> {
    let only = parse_only(&common.only).map_err(anyhow::Error::msg)?;
    let cwd = std::env::current_dir()?;
    let config = load_config(&common.config, |c| {
        if let Some(seed) = common.seed {
            c.seed = Some(seed);
        }
        if let Some(workers) = common.workers {
            c.workers = workers;
        }
        if !only.is_empty() {
            // Command-line paths are relative to the working directory.
            let only: Vec<_> = only.iter().map(|(k, p)| (k.clone(), cwd.join(p))).collect();
            c.inputs.restrict(&only)?;
        }
        if let Some(out) = &common.out {
            c.output_dir = cwd.join(out);
        }
        Ok(())
    })?;
    Ok(config)
}

/// Crash injection for the atomicity harness, read from the environment.
fn faults_from_env() -> Result<FaultPlan> {
    let mut plan = FaultPlan::default();
    if let Ok(file) = std::env::var("FOODCORPUS_ABORT_BEFORE_COMMIT") {
        plan.before_commit = Some((file, FaultAction::Abort));
    }
    if let Ok(name) = std::env::var("FOODCORPUS_ABORT_AFTER_STAGE") {
        let Some(stage) = Stage::ORDER.into_iter().find(|s| s.name() == name) else {
            bail!("unknown stage {name:?} in FOODCORPUS_ABORT_AFTER_STAGE");
        };
        plan.after_stage = Some((stage, FaultAction::Abort));
    }
    Ok(plan)
}

fn pipeline(common: &Common) -> Result<Pipeline> {
    Ok(Pipeline::new(load(common)?)?.with_faults(faults_from_env()?))
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    match writeln!(std::io::stdout().lock(), "{text}") {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn stage(common: &Common, stage: Stage) -> Result<()> {
    let run = pipeline(common)?.run_stage(stage)?;
    let reports: serde_json::Map<String, serde_json::Value> = run
        .reports
        .into_iter()
        .map(|(k, v)| (k, serde_json::to_value(v).expect("report serializes")))
        .collect();
    print_json(&reports)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::RunAll(common) => {
            let report = pipeline(&common)?.run_all()?;
            for (name, stage) in &report.stages {
                eprintln!(
                    "{name}: ingested {} emitted {} skipped {}",
                    stage.ingested, stage.emitted, stage.skipped
                );
            }
            for (file, lines) in &report.outputs {
                eprintln!("wrote {lines} lines to {file}");
            }
            Ok(())
        }
        Command::IngestDocs(c) => stage(&c, Stage::IngestDocs),
        Command::Filter(c) => stage(&c, Stage::Filter),
        Command::SerializeStructured(c) => stage(&c, Stage::SerializeStructured),
        Command::EmitCorpus(c) => stage(&c, Stage::EmitCorpus),
        Command::BuildInstructions(c) => stage(&c, Stage::BuildInstructions),
        Command::BuildKg(c) => stage(&c, Stage::BuildKg),
        Command::QueryKg { common, query } => print_json(&pipeline(&common)?.query_kg(&query)?),
        Command::ServeKg { common, addr } => {
            let p = pipeline(&common)?;
            let graph = Arc::new(p.load_graph()?);
            let server = QueryServer::bind(&addr, graph, p.query_settings())
                .with_context(|| format!("binding {addr}"))?;
            if let Some(local) = server.local_addr() {
                eprintln!("listening on http://{local}/query");
            }
            server.serve();
            Ok(())
        }
        Command::Validate(c) => print_json(&load(&c)?),
        Command::MakeFixture {
            out,
            seed,
            documents,
            records,
            forum_questions,
            seeds,
        } => {
            let spec = FixtureSpec {
                documents,
                records,
                forum_questions,
                seeds,
            };
            let layout = write_fixture(&out, &spec, seed)?;
            eprintln!("fixture written; config at {}", layout.config.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
