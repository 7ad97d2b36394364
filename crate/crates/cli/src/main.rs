//! `sitegrounder`: run each pipeline stage from the command line.

mod chat;
mod output;

use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use sitegrounder_core::chunker::ChunkingConfig;
use sitegrounder_core::conversation::{ModelProfile, DEFAULT_K};
use sitegrounder_core::crawler::{
    crawl, Corpus, CrawlConfig, HttpFetcher, MemoryFetcher, PageFetcher,
};
use sitegrounder_core::embedding::{BackendKind, Embedder, EmbedderProfile};
use sitegrounder_core::evalharness::{read_questions, run_eval, EvalOptions, EvalReport};
use sitegrounder_core::pipeline::build_index;
use sitegrounder_core::vector_index::VectorIndex;
use url::Url;

#[derive(Parser)]
#[command(
    name = "sitegrounder",
    version,
    about = "Crawl a website, index it, and chat over it"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Crawl a site into a JSON Lines corpus.
    Crawl(CrawlArgs),
    /// Chunk and embed a corpus into a vector index file.
    Index(IndexArgs),
    /// Interactive chat over an index (reads questions from stdin).
    Chat(ChatArgs),
    /// Answer a question set under one or more model profiles.
    Eval(EvalArgs),
    /// Record a 1-5 star rating in an eval report.
    Rate(RateArgs),
    /// Run the HTTP service.
    Serve(ServeArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Backend {
    Stub,
    Remote,
}

#[derive(Args)]
struct CrawlArgs {
    /// Start page; only its host is crawled.
    #[arg(long)]
    seed: String,
    #[arg(long, default_value_t = 500)]
    max_pages: usize,
    #[arg(long, default_value_t = 5)]
    max_depth: usize,
    /// Output corpus (JSON Lines, one document per line).
    #[arg(long)]
    out: PathBuf,
    /// Serve the site from this directory instead of the network; the seed's
    /// origin maps to the directory root.
    #[arg(long)]
    fixture_dir: Option<PathBuf>,
    /// Minimum delay between requests to the same host.
    #[arg(long, default_value_t = 250)]
    delay_ms: u64,
    #[arg(long, default_value_t = 10_000)]
    timeout_ms: u64,
    #[arg(long, default_value_t = 4)]
    workers: usize,
    /// Treat URLs that differ only in their query string as distinct pages.
    #[arg(long)]
    keep_query: bool,
    #[arg(long)]
    ignore_robots: bool,
}

#[derive(Args)]
struct EmbedderArgs {
    /// Embedding backend.
    #[arg(long, value_enum, default_value_t = Backend::Stub)]
    embedder: Backend,
    /// Model name sent to a remote embedding service.
    #[arg(long, default_value = "hkunlp/instructor-large")]
    embed_model: String,
    /// Remote embedding endpoint.
    #[arg(long, env = "SITEGROUNDER_EMBED_URL")]
    embed_url: Option<Url>,
}

impl EmbedderArgs {
    fn build(&self, dim: usize) -> Result<Arc<dyn Embedder>> {
        let profile = match self.embedder {
            Backend::Stub => EmbedderProfile::stub(dim),
            Backend::Remote => EmbedderProfile {
                kind: BackendKind::Remote,
                endpoint_url: self.embed_url.clone(),
                model_id: self.embed_model.clone(),
                dim,
            },
        };
        Ok(profile.build()?)
    }
}

#[derive(Args)]
struct IndexArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[command(flatten)]
    embed: EmbedderArgs,
    /// Embedding dimension.
    #[arg(long, default_value_t = 64)]
    dim: usize,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1000)]
    max_chunk_chars: usize,
    #[arg(long, default_value_t = 200)]
    overlap_chars: usize,
}

#[derive(Args)]
struct LlmArgs {
    /// Language model backend.
    #[arg(long, value_enum, default_value_t = Backend::Stub)]
    llm: Backend,
    /// Remote generation endpoint.
    #[arg(long, env = "SITEGROUNDER_LLM_URL")]
    llm_url: Option<Url>,
}

impl LlmArgs {
    fn profile(&self, id: &str) -> ModelProfile {
        match self.llm {
            Backend::Stub => ModelProfile::stub(id),
            Backend::Remote => ModelProfile::remote(id, id, self.llm_url.clone()),
        }
    }
}

#[derive(Args)]
struct ChatArgs {
    #[arg(long)]
    index: PathBuf,
    #[command(flatten)]
    llm: LlmArgs,
    /// Model name for a remote language model.
    #[arg(long, default_value = "google/flan-t5-xxl")]
    model: String,
    #[command(flatten)]
    embed: EmbedderArgs,
    /// Passages retrieved per question.
    #[arg(long, default_value_t = DEFAULT_K)]
    k: usize,
    /// Print sources under each answer from the start.
    #[arg(long)]
    sources: bool,
}

#[derive(Args)]
struct EvalArgs {
    /// Question set (JSON Lines).
    #[arg(long)]
    questions: PathBuf,
    #[arg(long)]
    index: PathBuf,
    /// Comma-separated profile ids; for remote models these are also the
    /// model names.
    #[arg(long, value_delimiter = ',', required = true)]
    profiles: Vec<String>,
    #[command(flatten)]
    llm: LlmArgs,
    #[command(flatten)]
    embed: EmbedderArgs,
    #[arg(long, default_value_t = DEFAULT_K)]
    k: usize,
    /// Evaluate profiles concurrently.
    #[arg(long)]
    parallel: bool,
    #[arg(long)]
    report: PathBuf,
}

#[derive(Args)]
struct RateArgs {
    #[arg(long)]
    report: PathBuf,
    #[arg(long)]
    qid: u32,
    #[arg(long)]
    profile: String,
    /// 1 to 5.
    #[arg(long)]
    stars: i64,
}

#[derive(Args)]
struct ServeArgs {
    /// TOML config file; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the configured port.
    #[arg(long)]
    port: Option<u16>,
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "warn".into()),
        )
        .init();
    let cli = Cli::parse();
    let runtime = match tokio::runtime::Runtime::new() {
        Ok(rt) => rt,
        Err(e) => {
            eprintln!("error: cannot start runtime: {e}");
            return ExitCode::FAILURE;
        }
    };
    match runtime.block_on(run(cli.command)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

async fn run(command: Command) -> Result<()> {
    match command {
        Command::Crawl(args) => crawl_cmd(args).await,
        Command::Index(args) => index_cmd(args).await,
        Command::Chat(args) => chat_cmd(args).await,
        Command::Eval(args) => eval_cmd(args).await,
        Command::Rate(args) => rate_cmd(args),
        Command::Serve(args) => serve_cmd(args).await,
    }
}

async fn crawl_cmd(args: CrawlArgs) -> Result<()> {
    let mut cfg = CrawlConfig::new(&args.seed)?;
    cfg.max_pages = args.max_pages;
    cfg.max_depth = args.max_depth;
    cfg.politeness_delay = Duration::from_millis(args.delay_ms);
    cfg.fetch_timeout = Duration::from_millis(args.timeout_ms);
    cfg.workers = args.workers;
    cfg.keep_query = args.keep_query;
    cfg.respect_robots = !args.ignore_robots;
    cfg.validate()?;

    let fetcher: Box<dyn PageFetcher> = match &args.fixture_dir {
        Some(dir) => {
            let origin = cfg.seed_url.join("/")?;
            Box::new(
                MemoryFetcher::from_directory(&origin, dir)
                    .with_context(|| format!("reading fixture site {}", dir.display()))?,
            )
        }
        None => Box::new(HttpFetcher::new(&cfg.user_agent, cfg.fetch_timeout)?),
    };
    let corpus: Corpus = crawl(&cfg, fetcher.as_ref()).await?;
    output::write_atomically(&args.out, |w| Ok(corpus.write_jsonl(w)?))?;
    eprintln!(
        "crawled {} pages ({} skipped) into {}",
        corpus.documents.len(),
        corpus.skipped.len(),
        args.out.display()
    );
    Ok(())
}

async fn index_cmd(args: IndexArgs) -> Result<()> {
    let chunking = ChunkingConfig::new(args.max_chunk_chars, args.overlap_chars)?;
    let file =
        File::open(&args.corpus).with_context(|| format!("opening {}", args.corpus.display()))?;
    let documents = Corpus::read_jsonl(BufReader::new(file))
        .with_context(|| format!("reading {}", args.corpus.display()))?;
    let embedder = args.embed.build(args.dim)?;
    let index = build_index(&documents, &chunking, embedder.as_ref()).await?;
    index.save(&args.out)?;
    eprintln!(
        "indexed {} chunks from {} documents into {}",
        index.len(),
        documents.len(),
        args.out.display()
    );
    Ok(())
}

fn load_index(path: &Path) -> Result<VectorIndex> {
    VectorIndex::load(path).with_context(|| format!("loading index {}", path.display()))
}

async fn chat_cmd(args: ChatArgs) -> Result<()> {
    let index = load_index(&args.index)?;
    let embedder = args.embed.build(index.dim())?;
    let profile = match args.llm.llm {
        Backend::Stub => ModelProfile::stub("stub"),
        Backend::Remote => ModelProfile::remote(&args.model, &args.model, args.llm.llm_url.clone()),
    };
    let llm = profile.build()?;
    let stdin = std::io::stdin().lock();
    let stdout = std::io::stdout().lock();
    let settings = chat::ChatSettings {
        opts: profile.chain_options(args.k),
        profile_id: profile.profile_id.clone(),
        show_sources: args.sources,
    };
    chat::repl(
        stdin,
        stdout,
        &index,
        embedder.as_ref(),
        llm.as_ref(),
        settings,
    )
    .await
}

async fn eval_cmd(args: EvalArgs) -> Result<()> {
    let file = File::open(&args.questions)
        .with_context(|| format!("opening {}", args.questions.display()))?;
    let questions = read_questions(BufReader::new(file))
        .with_context(|| format!("reading {}", args.questions.display()))?;
    let index = load_index(&args.index)?;
    let embedder = args.embed.build(index.dim())?;
    let profiles: Vec<ModelProfile> = args
        .profiles
        .iter()
        .map(|p| args.llm.profile(p.trim()))
        .collect();
    if profiles.iter().any(|p| p.profile_id.is_empty()) {
        bail!("--profiles contains an empty profile id");
    }
    let opts = EvalOptions {
        k: args.k,
        parallel: args.parallel,
    };
    let report = run_eval(&questions, &profiles, &index, embedder.as_ref(), &opts).await?;
    let json = report.to_json_pretty()?;
    output::write_atomically(&args.report, |w| Ok(writeln!(w, "{json}")?))?;
    let failed = report.records.iter().filter(|r| r.error.is_some()).count();
    eprintln!(
        "{} records ({} failed) written to {}",
        report.records.len(),
        failed,
        args.report.display()
    );
    Ok(())
}

fn rate_cmd(args: RateArgs) -> Result<()> {
    let text = std::fs::read_to_string(&args.report)
        .with_context(|| format!("reading {}", args.report.display()))?;
    let mut report = EvalReport::from_json(&text)?;
    report.annotate_rating(args.qid, &args.profile, args.stars)?;
    let json = report.to_json_pretty()?;
    output::write_atomically(&args.report, |w| Ok(writeln!(w, "{json}")?))?;
    if let Some(s) = report.summary(&args.profile) {
        match s.mean_rating {
            Some(mean) => eprintln!(
                "{}: {} of {} rated, mean {mean:.3}",
                s.profile_id, s.rated, s.records
            ),
            None => eprintln!("{}: no ratings yet", s.profile_id),
        }
    }
    Ok(())
}

async fn serve_cmd(args: ServeArgs) -> Result<()> {
    let mut config = match &args.config {
        Some(path) => sitegrounder_service::ServiceConfig::load(path)?,
        None => sitegrounder_service::ServiceConfig::default(),
    };
    config.apply_env()?;
    if let Some(port) = args.port {
        config.port = port;
    }
    let state = sitegrounder_service::AppState::from_config(config)?;
    sitegrounder_service::serve(Arc::new(state)).await?;
    Ok(())
}
