//! The `evctl` command line: ingest, index, perturb, run and report.
//!
//! Exit codes: 0 on success, 1 on runtime or backend failure, 2 on usage
//! errors (unknown flags, out-of-range values).

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{Config, IndexBackend};
use crate::controller::{run_example, Backends, ControllerConfig, ControllerTrace, Mode};
use crate::corpus::{
    chunk_corpus, parse_examples, read_chunks, write_chunks, Chunk, Example, WhitespaceTokenizer, FIXTURE_JSONL,
};
use crate::evaluate::{build_report, read_results, ExampleResult, ResultRecord, RESULT_SCHEMA_VERSION};
use crate::http::Endpoint;
use crate::index::{Embedder, HashEmbedder, RemoteEmbedder, VectorIndex};
use crate::oracle::live::LiveOracle;
use crate::oracle::{Oracle, RuleOracle};
use crate::perturb::{perturb, PerturbConfig, PerturbKind};
use crate::scoring::UtilityWeights;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Parser)]
#[command(name = "evctl", version, about = "Token-budgeted evidence control for multi-hop RAG")]
pub struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Increase log verbosity (repeatable).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load HotpotQA-style records and write one chunk per paragraph.
    Ingest(IngestArgs),
    /// Embed chunks and upsert them into a namespace of a snapshot file.
    Index(IndexArgs),
    /// Build a noise or redundancy corpus, write it and optionally index it.
    Perturb(PerturbArgs),
    /// Run a controller over examples and write a results file.
    Run(RunArgs),
    /// Aggregate results files into a table.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EmbedderKind {
    Hash,
    Remote,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OracleKind {
    Rules,
    Live,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceLevel {
    None,
    Summary,
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReportFormat {
    Text,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Adagate,
    Basic,
    AdaptiveK,
    SealStyle,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Adagate => Mode::Adagate,
            ModeArg::Basic => Mode::Basic,
            ModeArg::AdaptiveK => Mode::AdaptiveK,
            ModeArg::SealStyle => Mode::SealStyle,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KindArg {
    Noise,
    Redundancy,
}

impl From<KindArg> for PerturbKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Noise => PerturbKind::Noise,
            KindArg::Redundancy => PerturbKind::Redundancy,
        }
    }
}

#[derive(Debug, Args)]
pub struct InputArgs {
    /// Line-delimited HotpotQA-style records; defaults to the bundled fixture.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Use only the first N records.
    #[arg(long)]
    pub limit: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EmbedArgs {
    #[arg(long, value_enum)]
    pub embedder: Option<EmbedderKind>,
    /// Hash-embedder dimension (overrides `index.dim`).
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub dim: Option<u64>,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct IndexArgs {
    /// Chunk file written by `ingest` or `perturb`.
    #[arg(long)]
    pub chunks: PathBuf,
    #[arg(long, default_value = "clean")]
    pub namespace: String,
    /// Snapshot to update (created when missing).
    #[arg(long)]
    pub snapshot: PathBuf,
    #[command(flatten)]
    pub embed: EmbedArgs,
}

#[derive(Debug, Args)]
pub struct PerturbArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Chunk file to perturb; defaults to chunking the input records.
    #[arg(long)]
    pub chunks: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub kind: KindArg,
    #[arg(long, default_value_t = 0.5)]
    pub rho: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Cap on redundant variants per gold passage.
    #[arg(long, default_value_t = crate::perturb::DEFAULT_VARIANT_CAP)]
    pub variant_cap: usize,
    #[arg(long)]
    pub out: PathBuf,
    /// Also upsert the result into namespace `noise` or `redundancy` of this snapshot.
    #[arg(long)]
    pub snapshot: Option<PathBuf>,
    #[command(flatten)]
    pub embed: EmbedArgs,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long, value_enum, default_value = "adagate")]
    pub mode: ModeArg,
    /// Maximum repair iterations.
    #[arg(long = "L", value_name = "L", value_parser = clap::value_parser!(u64).range(1..))]
    pub max_iterations: Option<u64>,
    /// Passages retrieved per query.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub k: Option<u64>,
    /// Token budget for the evidence set.
    #[arg(long = "budget", short = 'B', value_parser = clap::value_parser!(u64).range(1..))]
    pub budget: Option<u64>,
    #[arg(long)]
    pub buffer: Option<usize>,
    /// Five comma-separated utility weights.
    #[arg(long, value_name = "W1,W2,W3,W4,W5", value_parser = parse_weights)]
    pub weights: Option<UtilityWeights>,
    #[arg(long, default_value = "clean")]
    pub namespace: String,
    /// Label for the report row; defaults to the namespace.
    #[arg(long)]
    pub condition: Option<String>,
    #[arg(long, value_enum, default_value = "rules")]
    pub oracle: OracleKind,
    #[command(flatten)]
    pub embed: EmbedArgs,
    /// Index snapshot; without one the namespace is built in memory from the input.
    #[arg(long)]
    pub snapshot: Option<PathBuf>,
    /// Seed for in-memory stress namespaces.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Worker threads; output order always follows the input.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    pub jobs: u64,
    #[arg(long, value_enum, default_value = "summary")]
    pub trace: TraceLevel,
    /// Append live-oracle request/response bodies to this file.
    #[arg(long)]
    pub log_oracle: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Results files.
    #[arg(long = "in", required = true, num_args = 1..)]
    pub inputs: Vec<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "text")]
    pub format: ReportFormat,
    /// Accept results files without a manifest.
    #[arg(long)]
    pub force: bool,
}

/// Written next to every results file as `<out>.manifest.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub config: ControllerConfig,
    pub oracle: String,
    pub embedder: String,
    pub seed: u64,
    pub corpus_sha256: String,
    pub namespace: String,
    pub condition: String,
    pub examples: usize,
    pub failed: usize,
    pub started_at: String,
    pub finished_at: String,
}

pub fn manifest_path(results: &Path) -> PathBuf {
    let mut s = results.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

/// Writes via a sibling temporary file and a rename.
fn write_atomic(path: &Path, bytes: &[u8]) -> anyhow::Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    {
        let mut f = fs::File::create(&tmp).with_context(|| format!("creating {}", tmp.display()))?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path).with_context(|| format!("renaming into {}", path.display()))?;
    Ok(())
}

fn load_config(path: Option<&Path>) -> anyhow::Result<Config> {
    match path {
        Some(p) => Ok(Config::load(p)?),
        None => Ok(Config::default()),
    }
}

/// Raw input bytes (for hashing) and parsed examples.
fn load_input(args: &InputArgs) -> anyhow::Result<(Vec<u8>, Vec<Example>)> {
    let bytes = match &args.input {
        Some(p) => fs::read(p).with_context(|| format!("reading {}", p.display()))?,
        None => FIXTURE_JSONL.as_bytes().to_vec(),
    };
    let examples = parse_examples(bytes.as_slice(), args.limit)?;
    Ok((bytes, examples))
}

fn embedder(cfg: &Config, args: &EmbedArgs) -> anyhow::Result<Arc<dyn Embedder>> {
    let dim = args.dim.map(|d| d as usize).unwrap_or(cfg.index.dim);
    let kind = args.embedder.unwrap_or(match cfg.index.backend {
        IndexBackend::Memory => EmbedderKind::Hash,
        IndexBackend::Remote => EmbedderKind::Remote,
    });
    Ok(match kind {
        EmbedderKind::Hash => Arc::new(HashEmbedder::new(dim)?),
        EmbedderKind::Remote => {
            let r = &cfg.index.remote;
            let mut ep = Endpoint::new(r.url.clone());
            ep.key_env = Some(r.key_env.clone());
            Arc::new(RemoteEmbedder::new(ep, r.model.clone(), dim))
        }
    })
}

fn embedder_label(cfg: &Config, args: &EmbedArgs) -> String {
    match args.embedder {
        Some(EmbedderKind::Hash) => "hash".into(),
        Some(EmbedderKind::Remote) => "remote".into(),
        None => match cfg.index.backend {
            IndexBackend::Memory => "hash".into(),
            IndexBackend::Remote => "remote".into(),
        },
    }
}

fn open_snapshot(path: &Path, embedder: Arc<dyn Embedder>) -> anyhow::Result<VectorIndex> {
    let index = VectorIndex::new(embedder);
    if path.exists() {
        index
            .load_snapshot(path)
            .with_context(|| format!("loading snapshot {}", path.display()))?;
    }
    Ok(index)
}

fn cmd_ingest(args: IngestArgs) -> anyhow::Result<()> {
    let (_, examples) = load_input(&args.input)?;
    let chunks = chunk_corpus(&examples, &WhitespaceTokenizer);
    write_chunks(&args.out, &chunks)?;
    eprintln!(
        "{} examples, {} chunks -> {}",
        examples.len(),
        chunks.len(),
        args.out.display()
    );
    Ok(())
}

fn cmd_index(cfg: &Config, args: IndexArgs) -> anyhow::Result<()> {
    let chunks = read_chunks(&args.chunks).with_context(|| format!("reading {}", args.chunks.display()))?;
    let index = open_snapshot(&args.snapshot, embedder(cfg, &args.embed)?)?;
    let n = index.upsert(&args.namespace, &chunks)?;
    index.save_snapshot(&args.snapshot)?;
    eprintln!(
        "upserted {n} chunks into `{}` ({})",
        args.namespace,
        args.snapshot.display()
    );
    Ok(())
}

fn cmd_perturb(cfg: &Config, args: PerturbArgs) -> anyhow::Result<()> {
    let (_, examples) = load_input(&args.input)?;
    let chunks = match &args.chunks {
        Some(p) => read_chunks(p).with_context(|| format!("reading {}", p.display()))?,
        None => chunk_corpus(&examples, &WhitespaceTokenizer),
    };
    let mut pc = PerturbConfig::new(args.kind.into(), args.rho, args.seed);
    pc.variant_cap = args.variant_cap;
    let out = perturb(&examples, &chunks, &pc)?;
    write_chunks(&args.out, &out)?;
    eprintln!("{} -> {} chunks -> {}", chunks.len(), out.len(), args.out.display());
    if let Some(snap) = &args.snapshot {
        let ns = match pc.kind {
            PerturbKind::Noise => "noise",
            PerturbKind::Redundancy => "redundancy",
        };
        let index = open_snapshot(snap, embedder(cfg, &args.embed)?)?;
        index.upsert(ns, &out)?;
        index.save_snapshot(snap)?;
        eprintln!("indexed into `{ns}` ({})", snap.display());
    }
    Ok(())
}

/// Chunks for the built-in namespaces, derived from the input records.
pub fn namespace_chunks(examples: &[Example], namespace: &str, seed: u64) -> crate::Result<Vec<Chunk>> {
    let clean = chunk_corpus(examples, &WhitespaceTokenizer);
    match namespace {
        "clean" => Ok(clean),
        "noise" => perturb(examples, &clean, &PerturbConfig::new(PerturbKind::Noise, 0.5, seed)),
        "redundancy" => perturb(
            examples,
            &clean,
            &PerturbConfig::new(PerturbKind::Redundancy, 0.5, seed),
        ),
        other => Err(crate::Error::UnknownNamespace(other.to_string())),
    }
}

fn parse_weights(s: &str) -> Result<UtilityWeights, String> {
    let w: Vec<f64> = s
        .split(',')
        .map(|x| x.trim().parse::<f64>().map_err(|e| format!("`{x}`: {e}")))
        .collect::<Result<_, _>>()?;
    let [lambda1, lambda2, lambda3, lambda4, lambda5] = w[..] else {
        return Err(format!("expected 5 weights, got {}", w.len()));
    };
    Ok(UtilityWeights {
        lambda1,
        lambda2,
        lambda3,
        lambda4,
        lambda5,
    })
}

fn controller_config(cfg: &Config, args: &RunArgs) -> anyhow::Result<ControllerConfig> {
    let weights = args.weights.unwrap_or(cfg.weights);
    let c = ControllerConfig {
        mode: args.mode.into(),
        max_iterations: args
            .max_iterations
            .map(|v| v as usize)
            .unwrap_or(cfg.controller.max_iterations),
        k: args.k.map(|v| v as usize).unwrap_or(cfg.controller.k),
        budget: args.budget.map(|v| v as usize).unwrap_or(cfg.controller.budget),
        buffer: args.buffer.unwrap_or(cfg.controller.buffer),
        weights,
        namespace: args.namespace.clone(),
        adaptive_k_pool: cfg.adaptive_k.pool,
        ..ControllerConfig::default()
    };
    c.validate()?;
    Ok(c)
}

fn trace_value(trace: &ControllerTrace, level: TraceLevel) -> crate::Result<Option<serde_json::Value>> {
    Ok(match level {
        TraceLevel::None => None,
        TraceLevel::Full => Some(serde_json::to_value(trace)?),
        TraceLevel::Summary => Some(serde_json::json!({
            "termination_reason": trace.termination_reason,
            "iterations": trace.iterations.len(),
            "ledger_extractions": trace.ledger_extractions,
            "repair_retrievals": trace.repair_retrievals,
            "selected": trace.selected,
            "final_verdict": trace.final_verdict,
        })),
    })
}

fn failed_record(ex: &Example, condition: &str, mode: Mode, err: &crate::Error) -> ResultRecord {
    ResultRecord {
        schema_version: RESULT_SCHEMA_VERSION,
        result: ExampleResult {
            example_id: ex.id.clone(),
            condition: condition.to_string(),
            mode: mode.to_string(),
            correct: false,
            precision: 0.0,
            recall: 0.0,
            f1: 0.0,
            input_tokens: 0,
            docs_passed: 0,
            termination_reason: None,
        },
        predicted_answer: String::new(),
        gold_answer: ex.gold_answer.clone(),
        selected_titles: Vec::new(),
        error: Some(err.to_string()),
        trace: None,
    }
}

/// Runs one example end to end and shapes the output record.
pub fn run_record(
    ex: &Example,
    condition: &str,
    config: &ControllerConfig,
    backends: &Backends<'_>,
    level: TraceLevel,
) -> ResultRecord {
    let outcome = run_example(ex, condition, config, backends).and_then(|(trace, result)| {
        Ok(ResultRecord {
            schema_version: RESULT_SCHEMA_VERSION,
            predicted_answer: trace.final_answer.as_str().to_string(),
            gold_answer: ex.gold_answer.clone(),
            selected_titles: trace.selected_titles.clone(),
            error: None,
            trace: trace_value(&trace, level)?,
            result,
        })
    });
    outcome.unwrap_or_else(|e| {
        log::error!("example {}: {e}", ex.id);
        failed_record(ex, condition, config.mode, &e)
    })
}

fn cmd_run(cfg: &Config, args: RunArgs) -> anyhow::Result<usize> {
    let started_at = chrono::Utc::now().to_rfc3339();
    let (bytes, examples) = load_input(&args.input)?;
    let config = controller_config(cfg, &args)?;
    let condition = args.condition.clone().unwrap_or_else(|| args.namespace.clone());

    let emb = embedder(cfg, &args.embed)?;
    let index = match &args.snapshot {
        Some(p) => {
            let idx = VectorIndex::new(emb);
            idx.load_snapshot(p)
                .with_context(|| format!("loading snapshot {}", p.display()))?;
            idx
        }
        None => {
            let idx = VectorIndex::new(emb);
            idx.upsert(
                &args.namespace,
                &namespace_chunks(&examples, &args.namespace, args.seed)?,
            )?;
            idx
        }
    };
    index.len(&args.namespace)?;

    let oracle: Box<dyn Oracle> = match args.oracle {
        OracleKind::Rules => Box::new(RuleOracle),
        OracleKind::Live => {
            let o = &cfg.oracle;
            let mut ep = Endpoint::new(o.url.clone());
            ep.key_env = Some(o.key_env.clone());
            let mut live = LiveOracle::new(ep, o.model.clone(), o.judge_model.clone());
            if let Some(p) = &args.log_oracle {
                let f = fs::OpenOptions::new()
                    .create(true)
                    .append(true)
                    .open(p)
                    .with_context(|| format!("opening {}", p.display()))?;
                live = live.with_log(f);
            }
            Box::new(live)
        }
    };
    let backends = Backends {
        index: &index,
        oracle: oracle.as_ref(),
        tokenizer: &WhitespaceTokenizer,
    };

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.jobs as usize)
        .build()
        .context("building worker pool")?;
    let records: Vec<ResultRecord> = pool.install(|| {
        examples
            .par_iter()
            .map(|ex| run_record(ex, &condition, &config, &backends, args.trace))
            .collect()
    });
    let failed = records.iter().filter(|r| r.error.is_some()).count();

    let mut body = Vec::new();
    for r in &records {
        serde_json::to_writer(&mut body, r)?;
        body.push(b'\n');
    }
    write_atomic(&args.out, &body)?;

    let manifest = RunManifest {
        tool_version: VERSION.to_string(),
        config,
        oracle: match args.oracle {
            OracleKind::Rules => "rules".into(),
            OracleKind::Live => "live".into(),
        },
        embedder: embedder_label(cfg, &args.embed),
        seed: args.seed,
        corpus_sha256: hex::encode(Sha256::digest(&bytes)),
        namespace: args.namespace.clone(),
        condition,
        examples: records.len(),
        failed,
        started_at,
        finished_at: chrono::Utc::now().to_rfc3339(),
    };
    write_atomic(&manifest_path(&args.out), &serde_json::to_vec_pretty(&manifest)?)?;
    eprintln!(
        "{} examples ({} failed) -> {}",
        records.len(),
        failed,
        args.out.display()
    );
    Ok(failed)
}

fn cmd_report(args: ReportArgs) -> anyhow::Result<()> {
    let mut records = Vec::new();
    for path in &args.inputs {
        let recs = read_results(path).with_context(|| format!("reading {}", path.display()))?;
        if !recs.is_empty() && !args.force && !manifest_path(path).exists() {
            bail!(
                "{} has no manifest ({}); pass --force to report it anyway",
                path.display(),
                manifest_path(path).display()
            );
        }
        records.extend(recs);
    }
    let report = build_report(&records)?;
    let text = match args.format {
        ReportFormat::Text => report.to_text(),
        ReportFormat::Csv => report.to_csv()?,
    };
    match &args.out {
        Some(p) => fs::write(p, &text).with_context(|| format!("writing {}", p.display()))?,
        None => print!("{text}"),
    }
    if report.failed > 0 {
        eprintln!("{} failed records excluded", report.failed);
    }
    Ok(())
}

fn dispatch(cli: Cli) -> anyhow::Result<i32> {
    let cfg = load_config(cli.config.as_deref())?;
    match cli.command {
        Command::Ingest(a) => cmd_ingest(a)?,
        Command::Index(a) => cmd_index(&cfg, a)?,
        Command::Perturb(a) => cmd_perturb(&cfg, a)?,
        Command::Run(a) => {
            let failed = cmd_run(&cfg, a)?;
            if failed > 0 {
                eprintln!("error: {failed} example(s) failed");
                return Ok(1);
            }
        }
        Command::Report(a) => cmd_report(a)?,
    }
    Ok(0)
}

/// Parses `args` (program name first) and runs the command, returning the exit code.
pub fn execute<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new()
        .filter_level(level)
        .parse_default_env()
        .try_init();
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}
