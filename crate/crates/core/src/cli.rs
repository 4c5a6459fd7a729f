//! Command-line front end. Exit codes: 0 success, 1 bad input or usage,
//! 2 internal invariant violation.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use tracing_subscriber::EnvFilter;

use crate::corpus::{read_documents, read_topics, WindowConfig};
use crate::error::{Error, Result};
use crate::eval::{read_qrels, Gain};
use crate::fusion::{fuse, FusionMethod};
use crate::index::{IndexConfig, QuantizedIndex};
use crate::pipeline::{
    embed_to_file, evaluate, index_from_files, rerank_with, run_pipeline, search_topics, EncoderConfig, Oracle, OracleSection, QueryEncoder, Settings,
};
use crate::rerank::RerankMode;
use crate::run::{read_run, write_run};

#[derive(Debug, Parser)]
#[command(name = "clirkit", version, about = "Cross-language retrieval experiments: index, search, fuse, rerank, evaluate")]
pub struct Cli {
    /// Worker threads [default: all cores]. Outputs do not depend on it.
    #[arg(long, global = true, value_name = "N")]
    pub threads: Option<usize>,
    /// TOML settings; command-line flags override its values.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Log filter written to stderr, e.g. `info` or `clirkit=debug`.
    #[arg(long, global = true, default_value = "warn")]
    pub log: String,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write synthetic passage embeddings for a corpus.
    Embed(EmbedArgs),
    /// Build a quantized index from a corpus and its passage embeddings.
    Index(IndexArgs),
    /// Retrieve passages per topic and aggregate them to documents (MaxP).
    Search(SearchArgs),
    /// Combine runs by reciprocal rank or by score.
    Fuse(FuseArgs),
    /// Rerank the head of a run with an oracle.
    Rerank(RerankArgs),
    /// Score a run against relevance judgments.
    Eval(EvalArgs),
    /// Run a declared recipe end to end (needs --config).
    Pipeline(PipelineArgs),
}

#[derive(Debug, Args)]
pub struct WindowArgs {
    /// Passage length in tokens [default: 180]
    #[arg(long)]
    pub window: Option<usize>,
    /// Distance between passage starts [default: 90]
    #[arg(long)]
    pub stride: Option<usize>,
}

impl WindowArgs {
    fn resolve(&self) -> Result<WindowConfig> {
        let d = WindowConfig::default();
        WindowConfig::new(self.window.unwrap_or(d.window), self.stride.unwrap_or(d.stride))
    }
}

#[derive(Debug, Args)]
pub struct EmbedArgs {
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Embedding dimension [default: 32]
    #[arg(long)]
    pub dim: Option<usize>,
    /// Encoder seed [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub window: WindowArgs,
}

#[derive(Debug, Args)]
pub struct IndexArgs {
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long)]
    pub embeddings: PathBuf,
    /// Index directory; replaced atomically.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub window: WindowArgs,
    /// Token pooling factor; 2 halves the stored vectors [default: 1]
    #[arg(long)]
    pub pool_factor: Option<usize>,
    /// Centroid count [default: 2^ceil(log2(sqrt(tokens)))]
    #[arg(long)]
    pub k: Option<usize>,
    /// Seed for sampling, k-means and pooling [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Training sample size [default: 65536]
    #[arg(long)]
    pub sample_size: Option<usize>,
    /// Lloyd iterations [default: 20]
    #[arg(long)]
    pub max_iters: Option<usize>,
    /// Also store unquantized vectors for `search --exact`.
    #[arg(long)]
    pub store_raw: bool,
}

fn parse_nprobe(s: &str) -> std::result::Result<usize, String> {
    if s == "max" {
        return Ok(usize::MAX);
    }
    match s.parse::<usize>() {
        Ok(n) if n >= 1 => Ok(n),
        _ => Err(format!("expected a positive integer or `max`, got `{s}`")),
    }
}

#[derive(Debug, Args)]
pub struct SearchArgs {
    #[arg(long)]
    pub index: PathBuf,
    #[arg(long)]
    pub topics: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Passages retrieved per topic [default: 2500]
    #[arg(long)]
    pub k_passages: Option<usize>,
    /// Centroids probed per query token, or `max` [default: 4]
    #[arg(long, value_parser = parse_nprobe)]
    pub nprobe: Option<usize>,
    /// Score with the stored raw vectors instead of the 1-bit codes.
    #[arg(long)]
    pub exact: bool,
    /// Documents kept per topic [default: 1000]
    #[arg(long)]
    pub max_docs: Option<usize>,
    /// Run tag [default: clirkit]
    #[arg(long)]
    pub tag: Option<String>,
    /// Query embeddings keyed by topic id; required for external encoders.
    #[arg(long)]
    pub query_embeddings: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FuseArgs {
    #[arg(required = true)]
    pub runs: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// rrf, score or score-norm [default: rrf]
    #[arg(long)]
    pub method: Option<FusionMethod>,
    /// RRF rank offset [default: 60]
    #[arg(long)]
    pub k_rrf: Option<f64>,
    /// Documents kept per topic [default: 1000]
    #[arg(long)]
    pub max_docs: Option<usize>,
    /// Run tag [default: clirkit]
    #[arg(long)]
    pub tag: Option<String>,
}

#[derive(Debug, Args)]
pub struct RerankArgs {
    #[arg(long)]
    pub run: PathBuf,
    #[arg(long)]
    pub topics: Option<PathBuf>,
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// pointwise, tournament or listwise [default: tournament]
    #[arg(long)]
    pub mode: Option<RerankMode>,
    /// Head size reranked per topic [default: 30]
    #[arg(long)]
    pub depth: Option<usize>,
    /// Heap extractions, i.e. fully ordered positions [default: 20]
    #[arg(long)]
    pub top_sorted: Option<usize>,
    /// Heap arity; parent plus children must fit one comparison [default: 4]
    #[arg(long)]
    pub arity: Option<usize>,
    /// Passage length for best-passage selection [default: 450]
    #[arg(long)]
    pub passage_tokens: Option<usize>,
    /// mock:truthful, mock:always-fail, mock:fail-every=N or an http(s) base URL
    #[arg(long)]
    pub oracle: Option<String>,
    /// Hidden scores (`id score` per line) for mock oracles.
    #[arg(long)]
    pub mock_scores: Option<PathBuf>,
    /// Environment variable holding the bearer token [default: CLIRKIT_ORACLE_TOKEN]
    #[arg(long)]
    pub auth_env: Option<String>,
    /// Request timeout in seconds [default: 60]
    #[arg(long)]
    pub timeout: Option<f64>,
    /// Retries on transport errors [default: 3]
    #[arg(long)]
    pub max_retries: Option<u32>,
    /// Oracle calls per second, 0 for unlimited [default: 0]
    #[arg(long)]
    pub rate_limit: Option<f64>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub run: PathBuf,
    #[arg(long)]
    pub qrels: Option<PathBuf>,
    /// nDCG cutoff [default: 20]
    #[arg(long)]
    pub ndcg_depth: Option<usize>,
    /// Recall cutoff [default: 1000]
    #[arg(long)]
    pub recall_depth: Option<usize>,
    /// exponential (2^g - 1) or linear [default: exponential]
    #[arg(long)]
    pub gain: Option<Gain>,
    /// Print JSON instead of aligned text.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct PipelineArgs {
    /// Output directory for all artifacts.
    #[arg(long)]
    pub out: PathBuf,
}

fn pick(flag: &Option<PathBuf>, file: &Option<PathBuf>, what: &str) -> Result<PathBuf> {
    flag.clone()
        .or_else(|| file.clone())
        .ok_or_else(|| Error::Config(format!("--{what} is required (or set `{what}` in --config)")))
}

fn cmd_embed(a: &EmbedArgs, s: &Settings) -> Result<()> {
    let corpus = pick(&a.corpus, &s.corpus, "corpus")?;
    let enc = EncoderConfig {
        dim: a.dim.unwrap_or(s.encoder.dim),
        seed: a.seed.unwrap_or(s.encoder.seed),
    };
    let n = embed_to_file(&corpus, &a.out, a.window.resolve()?, &enc.encoder()?)?;
    println!("passages embedded: {n}");
    Ok(())
}

fn cmd_index(a: &IndexArgs, s: &Settings) -> Result<()> {
    let corpus = pick(&a.corpus, &s.corpus, "corpus")?;
    let cfg = IndexConfig {
        k: a.k.or(s.index.k),
        pool_factor: a.pool_factor.unwrap_or(s.index.pool_factor),
        seed: a.seed.unwrap_or(s.index.seed),
        sample_size: a.sample_size.unwrap_or(s.index.sample_size),
        max_iters: a.max_iters.unwrap_or(s.index.max_iters),
        store_raw: a.store_raw || s.index.store_raw,
    };
    let meta = index_from_files(&corpus, &a.embeddings, &a.out, a.window.resolve()?, &cfg)?;
    println!("passages: {}", meta.n_passages);
    println!("tokens before pooling: {}", meta.tokens_before_pooling);
    println!("tokens after pooling: {}", meta.tokens_indexed);
    println!("centroids: {}", meta.k);
    Ok(())
}

fn cmd_search(a: &SearchArgs, s: &Settings) -> Result<()> {
    let topics = read_topics(&pick(&a.topics, &s.topics, "topics")?)?;
    let index = QuantizedIndex::load(&a.index)?;
    let queries = QueryEncoder::for_index(&index.meta, a.query_embeddings.as_deref())?;
    let mut params = s.search.params();
    params.k_passages = a.k_passages.unwrap_or(params.k_passages);
    params.nprobe = a.nprobe.unwrap_or(params.nprobe);
    params.exact |= a.exact;
    let tag = a.tag.clone().unwrap_or_else(|| s.tag.clone());
    let run = search_topics(&index, &topics, &queries, &params, a.max_docs.unwrap_or(s.search.max_docs), &tag)?;
    write_run(&run, &a.out)
}

fn cmd_fuse(a: &FuseArgs, s: &Settings) -> Result<()> {
    let runs = a.runs.iter().map(|p| read_run(p)).collect::<Result<Vec<_>>>()?;
    let tag = a.tag.clone().unwrap_or_else(|| s.tag.clone());
    let mut fused = fuse(
        &runs,
        a.method.unwrap_or(s.fusion.method),
        a.k_rrf.unwrap_or(s.fusion.k_rrf),
        &tag,
    );
    fused.truncate(a.max_docs.unwrap_or(s.search.max_docs));
    write_run(&fused, &a.out)
}

fn cmd_rerank(a: &RerankArgs, s: &Settings) -> Result<()> {
    let run = read_run(&a.run)?;
    let topics = read_topics(&pick(&a.topics, &s.topics, "topics")?)?;
    let corpus = read_documents(&pick(&a.corpus, &s.corpus, "corpus")?)?;
    let mut section = s.rerank.unwrap_or_default();
    section.mode = a.mode.unwrap_or(section.mode);
    section.depth = a.depth.unwrap_or(section.depth);
    section.top_sorted = a.top_sorted.unwrap_or(section.top_sorted.min(section.depth));
    section.heap_arity = a.arity.unwrap_or(section.heap_arity);
    section.passage_tokens = a.passage_tokens.unwrap_or(section.passage_tokens);
    let mut oracle = match (&a.oracle, &s.oracle) {
        (Some(spec), Some(file)) => OracleSection { spec: spec.clone(), ..file.clone() },
        (Some(spec), None) => OracleSection::new(spec.clone()),
        (None, Some(file)) => file.clone(),
        (None, None) => return Err(Error::Config("--oracle is required (or an [oracle] section in --config)".into())),
    };
    if a.mock_scores.is_some() {
        oracle.scores = a.mock_scores.clone();
    }
    oracle.auth_token_env = a.auth_env.clone().or(oracle.auth_token_env);
    oracle.timeout_secs = a.timeout.or(oracle.timeout_secs);
    oracle.max_retries = a.max_retries.or(oracle.max_retries);
    oracle.rate_limit = a.rate_limit.or(oracle.rate_limit);
    let oracle = Oracle::from_section(&oracle)?;
    let (out, stats) = rerank_with(&run, &topics, &corpus, &section, &oracle)?;
    write_run(&out, &a.out)?;
    eprintln!(
        "reranked {} topics: {} oracle calls, {} failures, {} docs kept in place",
        stats.topics, stats.oracle_calls, stats.failures, stats.pinned
    );
    Ok(())
}

fn cmd_eval(a: &EvalArgs, s: &Settings) -> Result<()> {
    let run = read_run(&a.run)?;
    let qrels = read_qrels(&pick(&a.qrels, &s.qrels, "qrels")?)?;
    let mut section = s.eval.clone();
    section.ndcg_depth = a.ndcg_depth.unwrap_or(section.ndcg_depth);
    section.recall_depth = a.recall_depth.unwrap_or(section.recall_depth);
    section.gain = a.gain.unwrap_or(section.gain);
    let report = evaluate(&run, &qrels, &section)?;
    if a.json {
        print!("{}", report.to_json());
    } else {
        print!("{}", report.to_text());
    }
    Ok(())
}

fn cmd_pipeline(a: &PipelineArgs, config: Option<&Path>, s: &Settings) -> Result<()> {
    if config.is_none() {
        return Err(Error::Config("pipeline needs --config".into()));
    }
    let summary = run_pipeline(s, &a.out)?;
    for sys in &summary.systems {
        println!(
            "{}: {} passages, {} tokens before pooling, {} after",
            sys.name, sys.passages, sys.tokens_before_pooling, sys.tokens_indexed
        );
    }
    println!("final run: {}", a.out.join("runs").join(&summary.final_run).display());
    if let Some(e) = &summary.eval {
        println!("{} {:.4}  {} {:.4}", e.ndcg.metric, e.ndcg.mean, e.recall.metric, e.recall.mean);
    }
    Ok(())
}

fn dispatch(cli: &Cli) -> Result<()> {
    let settings = match &cli.config {
        Some(p) => Settings::load(p)?,
        None => Settings::default(),
    };
    let settings = Settings {
        tag: if settings.tag.is_empty() { crate::pipeline::DEFAULT_TAG.into() } else { settings.tag },
        ..settings
    };
    match &cli.command {
        Command::Embed(a) => cmd_embed(a, &settings),
        Command::Index(a) => cmd_index(a, &settings),
        Command::Search(a) => cmd_search(a, &settings),
        Command::Fuse(a) => cmd_fuse(a, &settings),
        Command::Rerank(a) => cmd_rerank(a, &settings),
        Command::Eval(a) => cmd_eval(a, &settings),
        Command::Pipeline(a) => cmd_pipeline(a, cli.config.as_deref(), &settings),
    }
}

/// Run an already parsed command line, returning the process exit code.
pub fn run(cli: &Cli) -> i32 {
    let filter = EnvFilter::try_new(&cli.log).unwrap_or_else(|_| EnvFilter::new("warn"));
    let _ = tracing_subscriber::fmt().with_env_filter(filter).with_writer(std::io::stderr).try_init();
    let result = match cli.threads {
        Some(0) => Err(Error::Config("--threads must be >= 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))
            .and_then(|pool| pool.install(|| dispatch(cli))),
        None => dispatch(cli),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_internal() {
                2
            } else {
                1
            }
        }
    }
}

pub fn main() -> i32 {
    match Cli::try_parse() {
        Ok(cli) => run(&cli),
        Err(e) => {
            let _ = e.print();
            if e.use_stderr() {
                1
            } else {
                0
            }
        }
    }
}
