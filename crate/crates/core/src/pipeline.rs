//! Command implementations shared by the CLI and the `pipeline` recipe
//! runner. Everything here is file-in, file-out and deterministic for fixed
//! inputs and seeds, whatever the size of the rayon pool.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use tracing::{info, warn};

use crate::corpus::{read_documents, read_topics, tokenizer_by_name, Corpus, Tokenizer, Topic, WhitespaceTokenizer, WindowConfig};
use crate::embed_io::{read_embeddings, write_embeddings, SyntheticEncoder, TokenMatrix};
use crate::error::{Error, Result};
use crate::eval::{ndcg_at, read_qrels, recall_at, Gain, MetricReport, Qrels, DEFAULT_NDCG_DEPTH, DEFAULT_RECALL_DEPTH};
use crate::fusion::{fuse, FusionMethod, DEFAULT_K_RRF};
use crate::index::{build_index, IndexConfig, IndexMeta, Provenance, QuantizedIndex};
use crate::oracle::{ComparatorOracle, FailurePattern, MockOracle, MockOracleSpec, OracleEndpoint, WireOracle};
use crate::rerank::{rerank_listwise, rerank_pointwise, rerank_tournament, RerankConfig, RerankMode, RerankStats};
use crate::run::{write_run, Run};
use crate::search::{maxp_aggregate, search, SearchParams, DEFAULT_MAX_DOCS};

pub const DEFAULT_TAG: &str = "clirkit";
pub const DEFAULT_SYNTHETIC_DIM: usize = 32;

fn default_tag() -> String {
    DEFAULT_TAG.to_owned()
}

/// Synthetic encoder settings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EncoderConfig {
    pub dim: usize,
    pub seed: u64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            dim: DEFAULT_SYNTHETIC_DIM,
            seed: 0,
        }
    }
}

impl EncoderConfig {
    pub fn encoder(&self) -> Result<SyntheticEncoder> {
        if self.dim < 2 {
            return Err(Error::Config(format!("encoder dim must be >= 2, got {}", self.dim)));
        }
        Ok(SyntheticEncoder {
            dim: self.dim,
            seed: self.seed,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SearchSection {
    pub k_passages: usize,
    pub nprobe: usize,
    pub exact: bool,
    pub max_docs: usize,
}

impl Default for SearchSection {
    fn default() -> Self {
        let p = SearchParams::default();
        SearchSection {
            k_passages: p.k_passages,
            nprobe: p.nprobe,
            exact: p.exact,
            max_docs: DEFAULT_MAX_DOCS,
        }
    }
}

impl SearchSection {
    pub fn params(&self) -> SearchParams {
        SearchParams {
            k_passages: self.k_passages,
            nprobe: self.nprobe,
            exact: self.exact,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FusionSection {
    pub method: FusionMethod,
    pub k_rrf: f64,
}

impl Default for FusionSection {
    fn default() -> Self {
        FusionSection {
            method: FusionMethod::Rrf,
            k_rrf: DEFAULT_K_RRF,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RerankSection {
    pub mode: RerankMode,
    pub depth: usize,
    pub top_sorted: usize,
    pub heap_arity: usize,
    pub passage_tokens: usize,
}

impl Default for RerankSection {
    fn default() -> Self {
        let c = RerankConfig::default();
        RerankSection {
            mode: RerankMode::Tournament,
            depth: c.depth,
            top_sorted: c.top_sorted,
            heap_arity: c.heap_arity,
            passage_tokens: c.passage_tokens,
        }
    }
}

impl RerankSection {
    pub fn config(&self) -> RerankConfig {
        RerankConfig {
            depth: self.depth,
            top_sorted: self.top_sorted,
            heap_arity: self.heap_arity,
            passage_tokens: self.passage_tokens,
        }
    }
}

/// `spec` is `mock:truthful`, `mock:always-fail`, `mock:fail-every=N` or an
/// `http(s)://` base URL. Mocks read hidden scores from `scores`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleSection {
    pub spec: String,
    #[serde(default)]
    pub scores: Option<PathBuf>,
    #[serde(default)]
    pub auth_token_env: Option<String>,
    #[serde(default)]
    pub timeout_secs: Option<f64>,
    #[serde(default)]
    pub max_retries: Option<u32>,
    #[serde(default)]
    pub rate_limit: Option<f64>,
    #[serde(default)]
    pub max_tokens: Option<u32>,
    #[serde(default)]
    pub backoff_base_ms: Option<u64>,
}

impl OracleSection {
    pub fn new(spec: impl Into<String>) -> Self {
        OracleSection {
            spec: spec.into(),
            scores: None,
            auth_token_env: None,
            timeout_secs: None,
            max_retries: None,
            rate_limit: None,
            max_tokens: None,
            backoff_base_ms: None,
        }
    }

    fn endpoint(&self, base_url: &str) -> OracleEndpoint {
        let mut e = OracleEndpoint::new(base_url);
        if let Some(v) = &self.auth_token_env {
            e.auth_token_env = v.clone();
        }
        if let Some(v) = self.timeout_secs {
            e.timeout_secs = v;
        }
        if let Some(v) = self.max_retries {
            e.max_retries = v;
        }
        if let Some(v) = self.rate_limit {
            e.rate_limit = v;
        }
        if let Some(v) = self.max_tokens {
            e.max_tokens = v;
        }
        if let Some(v) = self.backoff_base_ms {
            e.backoff_base_ms = v;
        }
        e
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    pub ndcg_depth: usize,
    pub recall_depth: usize,
    pub gain: Gain,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            ndcg_depth: DEFAULT_NDCG_DEPTH,
            recall_depth: DEFAULT_RECALL_DEPTH,
            gain: Gain::Exponential,
        }
    }
}

/// One first-stage retrieval system of a recipe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    pub name: String,
    #[serde(default = "default_window")]
    pub window: usize,
    #[serde(default = "default_stride")]
    pub stride: usize,
    /// Overrides `index.pool_factor`.
    #[serde(default)]
    pub pool_factor: Option<usize>,
    /// Precomputed passage embeddings; synthetic ones are generated otherwise.
    #[serde(default)]
    pub embeddings: Option<PathBuf>,
    #[serde(default)]
    pub query_embeddings: Option<PathBuf>,
}

fn default_window() -> usize {
    WindowConfig::default().window
}
fn default_stride() -> usize {
    WindowConfig::default().stride
}

impl SystemConfig {
    pub fn window_config(&self) -> Result<WindowConfig> {
        WindowConfig::new(self.window, self.stride)
    }
}

/// Declarative settings. Subcommands read the sections they need; the
/// `pipeline` command runs the whole recipe.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Settings {
    #[serde(default)]
    pub corpus: Option<PathBuf>,
    #[serde(default)]
    pub topics: Option<PathBuf>,
    #[serde(default)]
    pub qrels: Option<PathBuf>,
    #[serde(default = "default_tag")]
    pub tag: String,
    #[serde(default)]
    pub encoder: EncoderConfig,
    #[serde(default)]
    pub index: IndexConfig,
    #[serde(default)]
    pub search: SearchSection,
    #[serde(default, rename = "system")]
    pub systems: Vec<SystemConfig>,
    #[serde(default)]
    pub fusion: FusionSection,
    #[serde(default)]
    pub rerank: Option<RerankSection>,
    #[serde(default)]
    pub oracle: Option<OracleSection>,
    #[serde(default)]
    pub eval: EvalSection,
}

impl Settings {
    /// Parse TOML; relative paths resolve against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut s: Settings = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let fix = |p: &mut Option<PathBuf>| {
            if let Some(path) = p {
                if path.is_relative() {
                    *path = base.join(&*path);
                }
            }
        };
        fix(&mut s.corpus);
        fix(&mut s.topics);
        fix(&mut s.qrels);
        for sys in &mut s.systems {
            fix(&mut sys.embeddings);
            fix(&mut sys.query_embeddings);
        }
        if let Some(o) = &mut s.oracle {
            fix(&mut o.scores);
        }
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }
}

/// Synthetic token embeddings for every passage of `corpus`.
pub fn embed_corpus(corpus: &Corpus, tokenizer: &dyn Tokenizer, window: WindowConfig, encoder: &SyntheticEncoder) -> Vec<TokenMatrix> {
    corpus
        .docs()
        .par_iter()
        .flat_map_iter(|doc| {
            let tokens = tokenizer.tokenize(&doc.body);
            crate::corpus::window_passages(&doc.doc_id, tokens.len(), window)
                .into_iter()
                .map(move |p| encoder.embed(&p.passage_id, &tokens[p.start..p.end()]))
                .collect::<Vec<_>>()
        })
        .collect()
}

pub fn embed_to_file(corpus_path: &Path, out: &Path, window: WindowConfig, encoder: &SyntheticEncoder) -> Result<usize> {
    let corpus = read_documents(corpus_path)?;
    let matrices = embed_corpus(&corpus, &WhitespaceTokenizer, window, encoder);
    let manifest = write_embeddings(out, &matrices, WhitespaceTokenizer::NAME, &encoder.tag())?;
    Ok(manifest.count)
}

/// Build and persist an index from a corpus and its passage embeddings.
pub fn index_from_files(corpus_path: &Path, embeddings_path: &Path, out_dir: &Path, window: WindowConfig, cfg: &IndexConfig) -> Result<IndexMeta> {
    window.validate()?;
    cfg.validate()?;
    let corpus = read_documents(corpus_path)?;
    let (manifest, embeddings) = read_embeddings(embeddings_path)?;
    let tokenizer = tokenizer_by_name(&manifest.tokenizer_name)?;
    let passages = corpus.passages(tokenizer.as_ref(), window);
    if passages.len() != embeddings.len() {
        warn!(
            "{} passages under window {}/{} but {} embedded; only embedded passages are indexed",
            passages.len(),
            window.window,
            window.stride,
            embeddings.len()
        );
    }
    let provenance = Provenance {
        window,
        tokenizer_name: manifest.tokenizer_name.clone(),
        encoder_tag: manifest.encoder_tag.clone(),
    };
    let index = build_index(&embeddings, &passages, cfg, provenance)?;
    index.save(out_dir)?;
    Ok(index.meta.clone())
}

/// How topics become query matrices.
pub enum QueryEncoder {
    Synthetic {
        encoder: SyntheticEncoder,
        tokenizer: Box<dyn Tokenizer>,
    },
    /// Matrices keyed by topic id.
    Precomputed(HashMap<String, TokenMatrix>),
}

impl QueryEncoder {
    /// Synthetic indexes encode queries themselves; anything else needs
    /// precomputed query embeddings.
    pub fn for_index(meta: &IndexMeta, query_embeddings: Option<&Path>) -> Result<Self> {
        if let Some(path) = query_embeddings {
            let (manifest, ms) = read_embeddings(path)?;
            if manifest.encoder_tag != meta.encoder_tag {
                warn!("query encoder {} differs from index encoder {}", manifest.encoder_tag, meta.encoder_tag);
            }
            return Ok(QueryEncoder::Precomputed(ms.into_iter().map(|m| (m.passage_id.clone(), m)).collect()));
        }
        match SyntheticEncoder::from_tag(&meta.encoder_tag) {
            Some(encoder) => Ok(QueryEncoder::Synthetic {
                encoder,
                tokenizer: tokenizer_by_name(&meta.tokenizer_name)?,
            }),
            None => Err(Error::Config(format!(
                "index encoder `{}` is external; pass query embeddings",
                meta.encoder_tag
            ))),
        }
    }

    pub fn encode(&self, topic: &Topic) -> Result<TokenMatrix> {
        match self {
            QueryEncoder::Synthetic { encoder, tokenizer } => {
                Ok(encoder.embed(&topic.topic_id, &tokenizer.tokenize(&topic.query_text())))
            }
            QueryEncoder::Precomputed(map) => map
                .get(&topic.topic_id)
                .cloned()
                .ok_or_else(|| Error::Consistency(format!("no query embedding for topic {}", topic.topic_id))),
        }
    }
}

/// Passage search plus MaxP for every topic, at most `max_docs` docs each.
pub fn search_topics(index: &QuantizedIndex, topics: &[Topic], queries: &QueryEncoder, params: &SearchParams, max_docs: usize, tag: &str) -> Result<Run> {
    params.validate()?;
    if params.exact && !index.has_raw() {
        return Err(Error::Config("exact scoring needs an index built with raw vectors (store_raw)".into()));
    }
    let per_topic: Vec<(String, Vec<(String, f64)>)> = topics
        .par_iter()
        .map(|t| {
            let q = queries.encode(t)?;
            let mut docs = maxp_aggregate(&search(&q, index, params)?);
            docs.truncate(max_docs);
            Ok((t.topic_id.clone(), docs))
        })
        .collect::<Result<_>>()?;
    let mut run = Run::new(tag);
    for (topic, docs) in per_topic {
        run.insert_scored(topic, docs);
    }
    Ok(run)
}

/// A judgment source resolved from an oracle spec string.
pub enum Oracle {
    Mock(MockOracle),
    Wire(WireOracle),
}

impl Oracle {
    pub fn from_section(section: &OracleSection) -> Result<Self> {
        let spec = section.spec.as_str();
        if let Some(pattern) = spec.strip_prefix("mock:") {
            let failure: FailurePattern = pattern.parse().map_err(Error::Config)?;
            let path = section
                .scores
                .as_deref()
                .ok_or_else(|| Error::Config("mock oracles need a hidden scores file".into()))?;
            let scores = MockOracleSpec::read_scores(path)?;
            return Ok(Oracle::Mock(MockOracle::new(MockOracleSpec::new(scores, failure))));
        }
        if spec.starts_with("http://") || spec.starts_with("https://") {
            return Ok(Oracle::Wire(WireOracle::new(section.endpoint(spec))?));
        }
        Err(Error::Config(format!(
            "oracle `{spec}` is neither mock:truthful, mock:always-fail, mock:fail-every=N nor an http(s) URL"
        )))
    }

    fn comparator(&self) -> &dyn ComparatorOracle {
        match self {
            Oracle::Mock(m) => m,
            Oracle::Wire(w) => w,
        }
    }

    fn mock(&self, mode: RerankMode) -> Result<&MockOracle> {
        match self {
            Oracle::Mock(m) => Ok(m),
            Oracle::Wire(_) => Err(Error::Config(format!(
                "{mode:?} reranking has no wire protocol; use a mock oracle"
            ))),
        }
    }
}

pub fn rerank_with(run: &Run, topics: &[Topic], corpus: &Corpus, section: &RerankSection, oracle: &Oracle) -> Result<(Run, RerankStats)> {
    let cfg = section.config();
    cfg.validate()?;
    match section.mode {
        RerankMode::Tournament => rerank_tournament(run, topics, corpus, &WhitespaceTokenizer, oracle.comparator(), &cfg),
        RerankMode::Pointwise => rerank_pointwise(run, topics, corpus, oracle.mock(section.mode)?, cfg.depth),
        RerankMode::Listwise => rerank_listwise(run, topics, corpus, oracle.mock(section.mode)?, cfg.depth),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub ndcg: MetricReport,
    pub recall: MetricReport,
}

pub fn evaluate(run: &Run, qrels: &Qrels, section: &EvalSection) -> Result<EvalReport> {
    if section.ndcg_depth == 0 || section.recall_depth == 0 {
        return Err(Error::Config("metric cutoffs must be >= 1".into()));
    }
    Ok(EvalReport {
        ndcg: ndcg_at(run, qrels, section.ndcg_depth, section.gain),
        recall: recall_at(run, qrels, section.recall_depth),
    })
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    /// Aligned `metric topic value` rows, means last.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let width = self
            .ndcg
            .per_topic
            .keys()
            .chain(self.recall.per_topic.keys())
            .map(String::len)
            .max()
            .unwrap_or(0)
            .max(3);
        for m in [&self.ndcg, &self.recall] {
            for (topic, v) in &m.per_topic {
                writeln!(out, "{:<12} {topic:<width$} {v:.4}", m.metric).unwrap();
            }
        }
        for m in [&self.ndcg, &self.recall] {
            writeln!(out, "{:<12} {:<width$} {:.4}", m.metric, "all", m.mean).unwrap();
        }
        writeln!(out, "# means over {} topics with relevant documents", self.ndcg.evaluated).unwrap();
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SystemSummary {
    pub name: String,
    pub passages: usize,
    pub tokens_before_pooling: usize,
    pub tokens_indexed: usize,
    pub k: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PipelineSummary {
    pub systems: Vec<SystemSummary>,
    pub final_run: String,
    pub rerank: Option<RerankStats>,
    pub eval: Option<EvalReport>,
}

fn required<'a>(p: &'a Option<PathBuf>, what: &str) -> Result<&'a Path> {
    p.as_deref().ok_or_else(|| Error::Config(format!("recipe has no `{what}` path")))
}

fn check_name(name: &str) -> Result<()> {
    let ok = !name.is_empty() && name.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.')) && name != "." && name != "..";
    if ok {
        Ok(())
    } else {
        Err(Error::Config(format!("system name `{name}` must be [A-Za-z0-9._-]+")))
    }
}

/// Run a recipe end to end, writing every artifact under `out`:
/// `systems/<name>/{embeddings.bin, index/}`, `runs/*.run`, `eval.json` and
/// `summary.json`.
pub fn run_pipeline(settings: &Settings, out: &Path) -> Result<PipelineSummary> {
    if settings.systems.is_empty() {
        return Err(Error::Config("recipe declares no [[system]]".into()));
    }
    let mut names = std::collections::BTreeSet::new();
    for s in &settings.systems {
        check_name(&s.name)?;
        if !names.insert(s.name.as_str()) {
            return Err(Error::Config(format!("duplicate system name `{}`", s.name)));
        }
    }
    let corpus_path = required(&settings.corpus, "corpus")?;
    let corpus = read_documents(corpus_path)?;
    let topics = read_topics(required(&settings.topics, "topics")?)?;
    let qrels = settings.qrels.as_deref().map(read_qrels).transpose()?;
    let oracle = match (&settings.rerank, &settings.oracle) {
        (Some(_), Some(o)) => Some(Oracle::from_section(o)?),
        (Some(_), None) => return Err(Error::Config("[rerank] needs an [oracle] section".into())),
        _ => None,
    };
    let runs_dir = out.join("runs");
    std::fs::create_dir_all(&runs_dir).map_err(|e| Error::io(&runs_dir, e))?;

    let mut system_runs = Vec::new();
    let mut summaries = Vec::new();
    for sys in &settings.systems {
        let window = sys.window_config()?;
        let dir = out.join("systems").join(&sys.name);
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let emb_path = match &sys.embeddings {
            Some(p) => p.clone(),
            None => {
                let p = dir.join("embeddings.bin");
                embed_to_file(corpus_path, &p, window, &settings.encoder.encoder()?)?;
                p
            }
        };
        let mut icfg = settings.index.clone();
        if let Some(f) = sys.pool_factor {
            icfg.pool_factor = f;
        }
        let index_dir = dir.join("index");
        let meta = index_from_files(corpus_path, &emb_path, &index_dir, window, &icfg)?;
        info!(
            "system {}: {} passages, {} tokens before pooling, {} indexed",
            sys.name, meta.n_passages, meta.tokens_before_pooling, meta.tokens_indexed
        );
        let index = QuantizedIndex::load(&index_dir)?;
        let queries = QueryEncoder::for_index(&index.meta, sys.query_embeddings.as_deref())?;
        let run = search_topics(&index, &topics, &queries, &settings.search.params(), settings.search.max_docs, &sys.name)?;
        write_run(&run, &runs_dir.join(format!("{}.run", sys.name)))?;
        summaries.push(SystemSummary {
            name: sys.name.clone(),
            passages: meta.n_passages,
            tokens_before_pooling: meta.tokens_before_pooling,
            tokens_indexed: meta.tokens_indexed,
            k: meta.k,
        });
        system_runs.push(run);
    }

    let (mut current, mut final_run) = if system_runs.len() > 1 {
        let mut fused = fuse(&system_runs, settings.fusion.method, settings.fusion.k_rrf, &settings.tag);
        fused.truncate(settings.search.max_docs);
        write_run(&fused, &runs_dir.join("fused.run"))?;
        (fused, "fused.run".to_owned())
    } else {
        let mut only = system_runs.pop().expect("one system");
        only.tag = settings.tag.clone();
        (only, format!("{}.run", settings.systems[0].name))
    };

    let mut rerank_stats = None;
    if let (Some(section), Some(oracle)) = (&settings.rerank, &oracle) {
        let (reranked, stats) = rerank_with(&current, &topics, &corpus, section, oracle)?;
        write_run(&reranked, &runs_dir.join("reranked.run"))?;
        current = reranked;
        final_run = "reranked.run".to_owned();
        rerank_stats = Some(stats);
    }

    let eval = match &qrels {
        Some(q) => {
            let report = evaluate(&current, q, &settings.eval)?;
            let p = out.join("eval.json");
            std::fs::write(&p, report.to_json()).map_err(|e| Error::io(&p, e))?;
            Some(report)
        }
        None => None,
    };
    let summary = PipelineSummary {
        systems: summaries,
        final_run,
        rerank: rerank_stats,
        eval,
    };
    let p = out.join("summary.json");
    let json = serde_json::to_string_pretty(&summary).expect("summary serializes") + "\n";
    std::fs::write(&p, json).map_err(|e| Error::io(&p, e))?;
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn settings_reject_unknown_keys() {
        let err = Settings::parse("[rerank]\ndepht = 3\n", Path::new(".")).unwrap_err();
        assert!(err.to_string().contains("depht"), "{err}");
    }

    #[test]
    fn settings_defaults_and_paths() {
        let s = Settings::parse(
            "corpus = \"docs.jsonl\"\n[[system]]\nname = \"a\"\n[[system]]\nname = \"b\"\nwindow = 450\nstride = 450\n[rerank]\n",
            Path::new("/base"),
        )
        .unwrap();
        assert_eq!(s.corpus.as_deref(), Some(Path::new("/base/docs.jsonl")));
        assert_eq!(s.systems[0].window_config().unwrap(), WindowConfig::default());
        assert_eq!(s.systems[1].window, 450);
        assert_eq!(s.rerank.unwrap().config(), RerankConfig::default());
        assert_eq!(s.search.k_passages, 2500);
        assert_eq!(s.fusion.k_rrf, 60.0);
    }

    #[test]
    fn oracle_specs() {
        let mut o = OracleSection::new("mock:truthful");
        assert!(matches!(Oracle::from_section(&o), Err(Error::Config(_))));
        o.spec = "gpt".into();
        assert!(matches!(Oracle::from_section(&o), Err(Error::Config(_))));
        o.spec = "mock:fail-every=x".into();
        assert!(matches!(Oracle::from_section(&o), Err(Error::Config(_))));
    }

    #[test]
    fn system_names_are_plain() {
        assert!(check_name("c4-450").is_ok());
        assert!(check_name("../x").is_err());
        assert!(check_name("").is_err());
    }
}
