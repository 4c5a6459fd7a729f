//! Documents, topics, tokenization and passage windowing.
//!
//! Documents are cut into fixed-size token windows. Two schemes are used
//! throughout the engine: overlapping 180-token windows with a stride of 90
//! for first-stage indexing, and non-overlapping 450-token passages for both
//! the long-passage index and tournament reranking.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Overlapping windows for first-stage indexing.
pub const DEFAULT_WINDOW: WindowConfig = WindowConfig {
    window: 180,
    stride: 90,
};

/// Non-overlapping long passages.
pub const LONG_PASSAGE: WindowConfig = WindowConfig {
    window: 450,
    stride: 450,
};

/// A source document. `title` is kept but never indexed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    #[serde(rename = "id")]
    pub doc_id: String,
    #[serde(default)]
    pub title: Option<String>,
    #[serde(rename = "text")]
    pub body: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Topic {
    pub topic_id: String,
    pub title: String,
    pub description: String,
}

impl Topic {
    /// Query text shared by the searcher, rerankers and oracle prompts.
    pub fn query_text(&self) -> String {
        build_query_text(self)
    }
}

/// Title and description joined by exactly one space.
pub fn build_query_text(topic: &Topic) -> String {
    let mut s = String::with_capacity(topic.title.len() + 1 + topic.description.len());
    s.push_str(&topic.title);
    s.push(' ');
    s.push_str(&topic.description);
    s
}

/// A named tokenization strategy. The name is persisted with every index so
/// embeddings produced under one tokenizer are never mixed with another.
pub trait Tokenizer: Send + Sync {
    fn name(&self) -> &str;
    fn tokenize(&self, text: &str) -> Vec<String>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct WhitespaceTokenizer;

impl WhitespaceTokenizer {
    pub const NAME: &'static str = "whitespace";
}

impl Tokenizer for WhitespaceTokenizer {
    fn name(&self) -> &str {
        Self::NAME
    }

    fn tokenize(&self, text: &str) -> Vec<String> {
        text.split_whitespace().map(str::to_owned).collect()
    }
}

/// Split on Unicode whitespace.
pub fn tokenize(text: &str) -> Vec<String> {
    WhitespaceTokenizer.tokenize(text)
}

pub fn tokenizer_by_name(name: &str) -> Result<Box<dyn Tokenizer>> {
    match name {
        WhitespaceTokenizer::NAME => Ok(Box::new(WhitespaceTokenizer)),
        other => Err(Error::Config(format!("unknown tokenizer `{other}`"))),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowConfig {
    pub window: usize,
    pub stride: usize,
}

impl WindowConfig {
    pub fn new(window: usize, stride: usize) -> Result<Self> {
        let cfg = WindowConfig { window, stride };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.stride == 0 || self.stride > self.window {
            return Err(Error::Config(format!(
                "window config requires 1 <= stride <= window, got window={} stride={}",
                self.window, self.stride
            )));
        }
        Ok(())
    }
}

impl Default for WindowConfig {
    fn default() -> Self {
        DEFAULT_WINDOW
    }
}

/// A token window of a document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Passage {
    pub passage_id: String,
    pub doc_id: String,
    pub start: usize,
    pub length: usize,
}

impl Passage {
    pub fn end(&self) -> usize {
        self.start + self.length
    }

    /// Reassemble the passage text from the document's tokens.
    pub fn text(&self, tokens: &[String]) -> String {
        tokens[self.start..self.end()].join(" ")
    }
}

pub fn passage_id(doc_id: &str, ordinal: usize) -> String {
    format!("{doc_id}#{ordinal}")
}

/// Windows start at 0, stride, 2·stride, ... and stop as soon as one reaches
/// the end of the document, so the last window is never covered entirely by
/// its predecessor.
pub fn window_passages(doc_id: &str, n_tokens: usize, cfg: WindowConfig) -> Vec<Passage> {
    let mut out = Vec::new();
    if n_tokens == 0 {
        return out;
    }
    let mut start = 0;
    loop {
        let end = (start + cfg.window).min(n_tokens);
        out.push(Passage {
            passage_id: passage_id(doc_id, out.len()),
            doc_id: doc_id.to_owned(),
            start,
            length: end - start,
        });
        if end == n_tokens {
            break;
        }
        start += cfg.stride;
    }
    out
}

/// An in-memory document collection with id lookup.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    docs: Vec<Document>,
    by_id: HashMap<String, usize>,
}

impl Corpus {
    pub fn new(docs: Vec<Document>) -> Result<Self> {
        let mut by_id = HashMap::with_capacity(docs.len());
        for (i, d) in docs.iter().enumerate() {
            if d.doc_id.is_empty() {
                return Err(Error::Format(format!("document {i} has an empty id")));
            }
            if by_id.insert(d.doc_id.clone(), i).is_some() {
                return Err(Error::Dup(d.doc_id.clone()));
            }
        }
        Ok(Corpus { docs, by_id })
    }

    pub fn get(&self, doc_id: &str) -> Option<&Document> {
        self.by_id.get(doc_id).map(|&i| &self.docs[i])
    }

    pub fn docs(&self) -> &[Document] {
        &self.docs
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    /// Window every document, in collection order.
    pub fn passages(&self, tokenizer: &dyn Tokenizer, cfg: WindowConfig) -> Vec<Passage> {
        self.docs
            .iter()
            .flat_map(|d| window_passages(&d.doc_id, tokenizer.tokenize(&d.body).len(), cfg))
            .collect()
    }
}

fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path, what: &str) -> Result<Vec<T>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let item = serde_json::from_str(&line)
            .map_err(|e| Error::parse(format!("{what} {}", path.display()), i + 1, e.to_string()))?;
        out.push(item);
    }
    Ok(out)
}

/// Read documents from JSONL with `id`, `title`, `text` fields. Extra fields
/// (urls, dates, ...) are ignored.
pub fn read_documents(path: &Path) -> Result<Corpus> {
    Corpus::new(read_jsonl(path, "documents")?)
}

/// Read topics from JSONL with `topic_id`, `title`, `description`. Unknown
/// fields are rejected.
pub fn read_topics(path: &Path) -> Result<Vec<Topic>> {
    let topics: Vec<Topic> = read_jsonl(path, "topics")?;
    let mut seen = std::collections::HashSet::new();
    for t in &topics {
        if t.topic_id.is_empty() {
            return Err(Error::Format("topic with empty topic_id".into()));
        }
        if !seen.insert(t.topic_id.as_str()) {
            return Err(Error::Dup(t.topic_id.clone()));
        }
    }
    Ok(topics)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn spans(ps: &[Passage]) -> Vec<(usize, usize)> {
        ps.iter().map(|p| (p.start, p.end())).collect()
    }

    #[test]
    fn tokenize_examples() {
        assert_eq!(tokenize("a b  c"), vec!["a", "b", "c"]);
        assert!(tokenize("").is_empty());
        assert_eq!(tokenize("北京 新闻"), vec!["北京", "新闻"]);
    }

    #[test]
    fn window_examples() {
        assert_eq!(spans(&window_passages("d", 100, DEFAULT_WINDOW)), vec![(0, 100)]);
        assert_eq!(
            spans(&window_passages("d", 270, DEFAULT_WINDOW)),
            vec![(0, 180), (90, 270)]
        );
        assert_eq!(
            spans(&window_passages("d", 900, LONG_PASSAGE)),
            vec![(0, 450), (450, 900)]
        );
        assert!(window_passages("d", 0, DEFAULT_WINDOW).is_empty());
    }

    #[test]
    fn passage_ids_are_consecutive() {
        let ps = window_passages("doc7", 500, DEFAULT_WINDOW);
        for (i, p) in ps.iter().enumerate() {
            assert_eq!(p.passage_id, format!("doc7#{i}"));
            assert_eq!(p.start, i * 90);
        }
    }

    #[test]
    fn query_text_examples() {
        let t = |a: &str, b: &str| Topic {
            topic_id: "1".into(),
            title: a.into(),
            description: b.into(),
        };
        assert_eq!(build_query_text(&t("solar power", "growth of solar")), "solar power growth of solar");
        assert_eq!(build_query_text(&t("t", "")), "t ");
        assert_eq!(build_query_text(&t("", "d")), " d");
    }

    #[test]
    fn bad_window_config() {
        assert!(WindowConfig::new(10, 0).is_err());
        assert!(WindowConfig::new(10, 11).is_err());
        assert!(WindowConfig::new(10, 10).is_ok());
    }

    #[test]
    fn corpus_rejects_duplicates() {
        let d = Document {
            doc_id: "a".into(),
            title: None,
            body: "x".into(),
        };
        assert!(matches!(Corpus::new(vec![d.clone(), d]), Err(Error::Dup(_))));
    }

    #[test]
    fn topics_reject_unknown_fields() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.jsonl");
        std::fs::write(&p, r#"{"topic_id":"1","title":"a","description":"b","narrative":"c"}"#).unwrap();
        let err = read_topics(&p).unwrap_err().to_string();
        assert!(err.contains("narrative"), "{err}");
    }

    proptest! {
        #[test]
        fn windows_tile_the_document(n in 1usize..2000, w in 1usize..300, s_frac in 0.0f64..1.0) {
            let stride = ((w as f64 * s_frac) as usize).clamp(1, w);
            let cfg = WindowConfig::new(w, stride).unwrap();
            let ps = window_passages("d", n, cfg);
            prop_assert!(!ps.is_empty());
            let mut cover = vec![0u32; n];
            for (i, p) in ps.iter().enumerate() {
                prop_assert!(p.length >= 1);
                prop_assert_eq!(p.start, i * stride);
                if i > 0 {
                    // never a subset of the previous window
                    prop_assert!(p.end() > ps[i - 1].end());
                }
                for c in &mut cover[p.start..p.end()] {
                    *c += 1;
                }
            }
            prop_assert!(cover.iter().all(|&c| c >= 1));
            if stride == w {
                prop_assert!(cover.iter().all(|&c| c == 1));
            }
        }

        #[test]
        fn plaid_windows_cover_at_most_twice(n in 1usize..3000) {
            let ps = window_passages("d", n, DEFAULT_WINDOW);
            let mut cover = vec![0u32; n];
            for p in &ps {
                for c in &mut cover[p.start..p.end()] {
                    *c += 1;
                }
            }
            prop_assert!(cover.iter().all(|&c| (1..=2).contains(&c)));
        }

        #[test]
        fn tokenize_join_idempotent(s in "\\PC{0,60}") {
            let once = tokenize(&s);
            prop_assert_eq!(tokenize(&once.join(" ")), once);
        }
    }
}
