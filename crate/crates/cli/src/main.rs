mod config;

use std::collections::BTreeSet;
use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use anyhow::{anyhow, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use skillhub_core::bench::{self, BenchConfig};
use skillhub_core::corpus::{self, License};
use skillhub_core::dense::{self, HttpProvider, RetryPolicy};
use skillhub_core::engine::EngineConfig;
use skillhub_core::eval::{self, EvalReport, GroundTruth, QueryAggregation, QuerySet, SweepGrid};
use skillhub_core::service::{self, AppState, SearchMode, SearchRequest};
use skillhub_core::synth::{self, SynthConfig};
use skillhub_core::{lexical, DenseIndex, EmbeddingProvider, HashEmbedder, InvertedIndex, SearchEngine};
use tracing::{error, info};

use config::{FileConfig, PathArgs, ProviderArgs, TuningArgs};

#[derive(Debug, Parser)]
#[command(name = "skillhub", version, about = "Hybrid keyword + semantic search over agent skills")]
struct Cli {
    /// TOML or JSON file with defaults for any flag
    #[arg(long, global = true, env = "SKILLHUB_CONFIG")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Scan a skills tree and write the corpus manifest
    Ingest(IngestArgs),
    /// Build the lexical index and vector store for a manifest
    Index(IndexArgs),
    /// Serve the search API over HTTP
    Serve(ServeArgs),
    /// Run one query and print the service's JSON response
    Search(SearchArgs),
    /// Recall@k report, or the built-in latency benchmark with --bench
    Eval(EvalArgs),
    /// Grid search over the content weights
    Sweep(SweepArgs),
    /// Print the finding-skills SKILL.md for a server base URL
    EmitSkillDoc(EmitArgs),
}

#[derive(Debug, Args)]
struct IngestArgs {
    /// Root of the `<author>/<name>/` skills tree
    #[arg(long)]
    source: PathBuf,
    /// Output manifest path
    #[arg(long, env = "SKILLHUB_CORPUS")]
    corpus: Option<PathBuf>,
    /// Accepted licenses (repeatable) [default: MIT, Apache-2.0]
    #[arg(long = "license")]
    licenses: Vec<String>,
}

#[derive(Debug, Args)]
struct IndexArgs {
    #[command(flatten)]
    paths: PathArgs,
    #[command(flatten)]
    provider: ProviderArgs,
    #[command(flatten)]
    tuning: TuningArgs,
}

#[derive(Debug, Args)]
struct ServeArgs {
    #[arg(long, env = "SKILLHUB_PORT")]
    port: Option<u16>,
    /// Listen address [default: 127.0.0.1]
    #[arg(long, env = "SKILLHUB_BIND")]
    bind: Option<String>,
    #[command(flatten)]
    paths: PathArgs,
    #[command(flatten)]
    provider: ProviderArgs,
    #[command(flatten)]
    tuning: TuningArgs,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    Keyword,
    Semantic,
    Hybrid,
}

impl From<ModeArg> for SearchMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Keyword => SearchMode::Keyword,
            ModeArg::Semantic => SearchMode::Semantic,
            ModeArg::Hybrid => SearchMode::Hybrid,
        }
    }
}

#[derive(Debug, Args)]
struct SearchArgs {
    #[arg(long, value_enum, default_value = "hybrid")]
    mode: ModeArg,
    #[arg(long)]
    q: String,
    #[arg(long, default_value_t = service::DEFAULT_TOP_K as i64, allow_negative_numbers = true)]
    top_k: i64,
    #[command(flatten)]
    paths: PathArgs,
    #[command(flatten)]
    provider: ProviderArgs,
    #[command(flatten)]
    tuning: TuningArgs,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum EvalMode {
    /// Task descriptions as semantic queries over metadata vectors
    Direct,
    /// Externally produced rankings from --lists
    Lists,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long, value_enum, default_value = "direct")]
    mode: EvalMode,
    #[arg(long, required_unless_present = "bench")]
    ground_truth: Option<PathBuf>,
    /// queries.json; its descriptions drive direct mode
    #[arg(long)]
    queries: Option<PathBuf>,
    /// Directory of `<task_id>.txt` rankings
    #[arg(long)]
    lists: Option<PathBuf>,
    /// Label of the imported rankings in the report
    #[arg(long, default_value = "Imported")]
    label: String,
    #[arg(long = "k", value_delimiter = ',', default_values_t = eval::DEFAULT_KS)]
    ks: Vec<usize>,
    /// Fail on tasks or skills missing from the ground truth or corpus
    #[arg(long)]
    strict: bool,
    /// Also write the report as JSON
    #[arg(long)]
    json_out: Option<PathBuf>,
    /// Run the synthetic latency and build benchmark instead
    #[arg(long)]
    bench: bool,
    #[arg(long, default_value_t = synth::REFERENCE_CORPUS_SKILLS)]
    bench_skills: usize,
    #[arg(long, default_value_t = 200)]
    bench_queries: usize,
    #[arg(long, default_value_t = HashEmbedder::DEFAULT_DIM)]
    bench_dim: usize,
    #[arg(long, default_value_t = 42)]
    bench_seed: u64,
    #[command(flatten)]
    paths: PathArgs,
    #[command(flatten)]
    provider: ProviderArgs,
    #[command(flatten)]
    tuning: TuningArgs,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum AggregationArg {
    Max,
    Mean,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[arg(long)]
    ground_truth: PathBuf,
    #[arg(long)]
    queries: PathBuf,
    /// BM25 content-field weights to try
    #[arg(long, value_delimiter = ',', default_values_t = [0.0, 2.5, 5.0, 10.0])]
    bm25_content_weights: Vec<f64>,
    /// Semantic content weights to try
    #[arg(long, value_delimiter = ',', default_values_t = [0.0, 0.05, 0.1, 0.25, 0.5])]
    content_weights: Vec<f64>,
    /// How a task's queries combine
    #[arg(long, value_enum, default_value = "max")]
    aggregation: AggregationArg,
    #[arg(long)]
    strict: bool,
    #[arg(long)]
    json_out: Option<PathBuf>,
    #[command(flatten)]
    paths: PathArgs,
    #[command(flatten)]
    provider: ProviderArgs,
    #[command(flatten)]
    tuning: TuningArgs,
}

#[derive(Debug, Args)]
struct EmitArgs {
    #[arg(long, default_value = "http://localhost:8742")]
    base_url: String,
    /// Write to this file instead of stdout
    #[arg(long)]
    out: Option<PathBuf>,
}

/// A bad invocation discovered after flag parsing; exits 1 like a clap error.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
struct UsageError(String);

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_env("SKILLHUB_LOG")
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("info")),
        )
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let file = match &cli.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    match cli.command {
        Command::Ingest(a) => cmd_ingest(a, &file),
        Command::Index(a) => cmd_index(a, &file),
        Command::Serve(a) => cmd_serve(a, &file),
        Command::Search(a) => cmd_search(a, &file),
        Command::Eval(a) => cmd_eval(a, &file),
        Command::Sweep(a) => cmd_sweep(a, &file),
        Command::EmitSkillDoc(a) => cmd_emit(a),
    }
}

fn cmd_ingest(a: IngestArgs, file: &FileConfig) -> Result<()> {
    let out = a
        .corpus
        .or_else(|| file.corpus.clone())
        .ok_or_else(|| usage("ingest needs --corpus for the output manifest"))?;
    let allowlist: BTreeSet<License> = if a.licenses.is_empty() {
        License::permissive()
    } else {
        a.licenses
            .iter()
            .map(|l| l.parse::<License>().map_err(|e| usage(format!("--license {l:?}: {e}"))))
            .collect::<Result<_>>()?
    };
    let manifest = corpus::ingest(&a.source, &allowlist)?;
    corpus::save_manifest(&manifest, &out)?;
    println!("{}", serde_json::to_string(&manifest.counts)?);
    info!(path = %out.display(), kept = manifest.counts.kept, "manifest written");
    Ok(())
}

fn make_provider(p: &ProviderArgs) -> Result<Arc<dyn EmbeddingProvider>> {
    match &p.provider_url {
        Some(url) => {
            let timeout = Duration::from_secs(p.provider_timeout.unwrap_or(30));
            let mut provider = HttpProvider::connect(url, timeout, RetryPolicy::default())?;
            if let Some(limit) = p.provider_max_chars {
                provider = provider.with_max_input_chars(limit);
            }
            Ok(Arc::new(provider))
        }
        None => {
            let dim = p.hash_dim.unwrap_or(HashEmbedder::DEFAULT_DIM);
            if dim == 0 {
                return Err(usage("--hash-dim must be positive"));
            }
            Ok(Arc::new(HashEmbedder::with_dim(p.hash_seed.unwrap_or(0), dim)))
        }
    }
}

fn require<'a>(path: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path> {
    path.as_deref().ok_or_else(|| usage(format!("missing --{flag}")))
}

fn cmd_index(a: IndexArgs, file: &FileConfig) -> Result<()> {
    let paths = config::resolve_paths(&a.paths, file);
    let cfg = config::resolve_engine_config(&a.tuning, file);
    let corpus_path = require(&paths.corpus, "corpus")?;
    let lexical_path = require(&paths.lexical_index, "lexical-index")?;
    let vector_path = require(&paths.vector_store, "vector-store")?;
    cfg.lexical.validate()?;
    cfg.semantic.validate()?;
    let provider = make_provider(&config::resolve_provider(&a.provider, file))?;

    let manifest = corpus::load_manifest(corpus_path)?;
    let t = Instant::now();
    let lex = lexical::build_lexical_index(&manifest, &cfg.lexical)?;
    lex.save(lexical_path)?;
    info!(docs = lex.doc_count(), secs = t.elapsed().as_secs_f64(), "lexical index written");
    let t = Instant::now();
    let vectors = dense::build_dense_index(&manifest, provider.as_ref(), &cfg.semantic, RetryPolicy::default())?;
    vectors.save(vector_path)?;
    info!(rows = vectors.len(), dim = vectors.dim(), secs = t.elapsed().as_secs_f64(), "vector store written");
    Ok(())
}

/// Loads the manifest and any stored indexes; indexes without a path are
/// built in memory.
fn load_engine(paths: &PathArgs, provider: Arc<dyn EmbeddingProvider>, cfg: EngineConfig) -> Result<SearchEngine> {
    let corpus_path = require(&paths.corpus, "corpus")?;
    let manifest = corpus::load_manifest(corpus_path)?;
    let lex = match &paths.lexical_index {
        Some(p) => InvertedIndex::load(p).with_context(|| format!("loading {}", p.display()))?,
        None => lexical::build_lexical_index(&manifest, &cfg.lexical)?,
    };
    let vectors = match &paths.vector_store {
        Some(p) => DenseIndex::load(p).with_context(|| format!("loading {}", p.display()))?,
        None => dense::build_dense_index(&manifest, provider.as_ref(), &cfg.semantic, RetryPolicy::default())?,
    };
    Ok(SearchEngine::new(manifest, lex, vectors, provider, cfg)?)
}

fn engine_from(paths: &PathArgs, provider: &ProviderArgs, tuning: &TuningArgs, file: &FileConfig) -> Result<SearchEngine> {
    let paths = config::resolve_paths(paths, file);
    require(&paths.corpus, "corpus")?;
    let cfg = config::resolve_engine_config(tuning, file);
    let provider = make_provider(&config::resolve_provider(provider, file))?;
    load_engine(&paths, provider, cfg)
}

fn cmd_serve(a: ServeArgs, file: &FileConfig) -> Result<()> {
    let paths = config::resolve_paths(&a.paths, file);
    require(&paths.corpus, "corpus")?;
    let cfg = config::resolve_engine_config(&a.tuning, file);
    let provider_args = config::resolve_provider(&a.provider, file);
    let port = a.port.or(file.port).unwrap_or(service::DEFAULT_PORT);
    let bind = a.bind.or_else(|| file.bind.clone()).unwrap_or_else(|| "127.0.0.1".into());
    let addr: SocketAddr = format!("{bind}:{port}")
        .parse()
        .or_else(|_| format!("[{bind}]:{port}").parse())
        .map_err(|_| usage(format!("invalid --bind address {bind:?}")))?;

    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    runtime.block_on(async move {
        let state = AppState::new();
        let listener = tokio::net::TcpListener::bind(addr)
            .await
            .with_context(|| format!("binding {addr}"))?;
        info!("listening on http://{}", listener.local_addr()?);

        // Requests get 503 until the snapshot is installed.
        let loader_state = state.clone();
        tokio::task::spawn_blocking(move || {
            let t = Instant::now();
            let loaded = make_provider(&provider_args).and_then(|p| load_engine(&paths, p, cfg));
            match loaded {
                Ok(engine) => {
                    info!(skills = engine.records().len(), secs = t.elapsed().as_secs_f64(), "index loaded");
                    loader_state.install(Arc::new(engine));
                }
                Err(e) => {
                    error!("loading index failed: {e:#}");
                    std::process::exit(2);
                }
            }
        });
        axum_serve(listener, state).await
    })
}

async fn axum_serve(listener: tokio::net::TcpListener, state: AppState) -> Result<()> {
    let shutdown = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    skillhub_core::service::serve_listener(listener, state, shutdown)
        .await
        .context("server failed")
}

fn cmd_search(a: SearchArgs, file: &FileConfig) -> Result<()> {
    if a.q.trim().is_empty() {
        return Err(usage("--q is empty"));
    }
    let engine = engine_from(&a.paths, &a.provider, &a.tuning, file)?;
    let fusion = &engine.config().fusion;
    let req = SearchRequest {
        q: a.q.clone(),
        top_k: a.top_k.clamp(1, service::MAX_TOP_K as i64) as usize,
        keyword_weight: fusion.keyword_weight,
        semantic_weight: fusion.semantic_weight,
    };
    let resp = service::run_search(&engine, a.mode.into(), &req).map_err(|e| {
        if e.status.is_client_error() {
            usage(e.message)
        } else {
            anyhow!(e.message)
        }
    })?;
    if let Some(w) = &resp.warning {
        eprintln!("warning: {w}");
    }
    println!("{}", String::from_utf8(resp.body())?);
    Ok(())
}

fn write_json(path: &Option<PathBuf>, json: &str) -> Result<()> {
    if let Some(p) = path {
        fs::write(p, json).with_context(|| format!("writing {}", p.display()))?;
    }
    Ok(())
}

fn cmd_eval(a: EvalArgs, file: &FileConfig) -> Result<()> {
    if a.bench {
        return run_bench(&a);
    }
    let truth_path = a.ground_truth.as_ref().expect("clap requires --ground-truth");
    let truth = GroundTruth::load(truth_path)?;
    let mut report = EvalReport::new(&a.ks);
    match a.mode {
        EvalMode::Direct => {
            let queries_path = a
                .queries
                .as_ref()
                .ok_or_else(|| usage("direct mode needs --queries for the task descriptions"))?;
            let queries = QuerySet::load(queries_path)?;
            let engine = engine_from(&a.paths, &a.provider, &a.tuning, file)?;
            report.echo_engine_config(&engine);
            report.push(eval::evaluate_direct(&engine, &queries.descriptions(), &truth, &a.ks, a.strict)?);
        }
        EvalMode::Lists => {
            let dir = a.lists.as_ref().ok_or_else(|| usage("lists mode needs --lists"))?;
            let lists = eval::load_ranked_lists(dir)?;
            report.push(eval::evaluate_ranked_lists(&a.label, &lists, &truth, &a.ks, a.strict)?);
        }
    }
    print!("{}", report.render_table());
    write_json(&a.json_out, &report.to_json())
}

fn run_bench(a: &EvalArgs) -> Result<()> {
    if a.bench_skills == 0 || a.bench_queries == 0 || a.bench_dim == 0 {
        return Err(usage("--bench-skills, --bench-queries and --bench-dim must be positive"));
    }
    let cfg = BenchConfig {
        corpus: SynthConfig {
            skills: a.bench_skills,
            seed: a.bench_seed,
            ..SynthConfig::default()
        },
        queries: a.bench_queries,
        dim: a.bench_dim,
        ..BenchConfig::default()
    };
    let report = bench::run_benchmark(&cfg)?;
    print!("{}", report.render());
    write_json(&a.json_out, &serde_json::to_string_pretty(&report)?)
}

fn cmd_sweep(a: SweepArgs, file: &FileConfig) -> Result<()> {
    let truth = GroundTruth::load(&a.ground_truth)?;
    let queries = QuerySet::load(&a.queries)?;
    let engine = engine_from(&a.paths, &a.provider, &a.tuning, file)?;
    let grid = SweepGrid {
        bm25_content_weights: a.bm25_content_weights,
        content_weights: a.content_weights,
    };
    let aggregation = match a.aggregation {
        AggregationArg::Max => QueryAggregation::Max,
        AggregationArg::Mean => QueryAggregation::Mean,
    };
    let report = eval::sweep_weights(&engine, &grid, &queries, &truth, aggregation, a.strict)?;
    print!("{}", report.render_table());
    write_json(&a.json_out, &report.to_json())
}

fn cmd_emit(a: EmitArgs) -> Result<()> {
    let doc = service::emit_finding_skills_doc(&a.base_url).map_err(|e| usage(e.to_string()))?;
    match a.out {
        Some(p) => fs::write(&p, doc).with_context(|| format!("writing {}", p.display()))?,
        None => print!("{doc}"),
    }
    Ok(())
}
