//! Reranking the head of a run: pointwise rescoring, the best-passage
//! tournament followed by k-ary heapsort, and single-shot listwise ordering.
//!
//! Reordered heads are written back with [`stitch_scores`]. A head whose
//! order did not change is left exactly as it was, scores included.

mod heap;

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};
use tracing::warn;

pub use heap::{call_bound, heapsort_order, heapsort_rerank, select_best_passage, HeapsortOutcome, PassageChoice, MAX_GROUP};

use crate::corpus::{Corpus, Tokenizer, Topic};
use crate::error::{Error, Result};
use crate::oracle::{Candidate, ComparatorOracle, ListOracle, PointwiseScorer};
use crate::run::{RankedDoc, Run};

pub const DEFAULT_DEPTH: usize = 30;
pub const DEFAULT_TOP_SORTED: usize = 20;
pub const DEFAULT_ARITY: usize = 4;
pub const DEFAULT_PASSAGE_TOKENS: usize = 450;
/// Gap between consecutive stitched head scores.
pub const STITCH_EPSILON: f64 = 0.001;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RerankConfig {
    pub depth: usize,
    pub top_sorted: usize,
    pub heap_arity: usize,
    pub passage_tokens: usize,
}

impl Default for RerankConfig {
    fn default() -> Self {
        RerankConfig {
            depth: DEFAULT_DEPTH,
            top_sorted: DEFAULT_TOP_SORTED,
            heap_arity: DEFAULT_ARITY,
            passage_tokens: DEFAULT_PASSAGE_TOKENS,
        }
    }
}

impl RerankConfig {
    pub fn validate(&self) -> Result<()> {
        if self.depth == 0 {
            return Err(Error::Config("rerank depth must be >= 1".into()));
        }
        if self.top_sorted > self.depth {
            return Err(Error::Config(format!(
                "top_sorted ({}) must not exceed depth ({})",
                self.top_sorted, self.depth
            )));
        }
        if self.heap_arity < 2 || self.heap_arity + 1 > MAX_GROUP {
            return Err(Error::Config(format!(
                "heap arity must be in 2..={}, got {}",
                MAX_GROUP - 1,
                self.heap_arity
            )));
        }
        if self.passage_tokens == 0 {
            return Err(Error::Config("passage_tokens must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RerankMode {
    Pointwise,
    Tournament,
    Listwise,
}

impl std::str::FromStr for RerankMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "pointwise" => Ok(RerankMode::Pointwise),
            "tournament" => Ok(RerankMode::Tournament),
            "listwise" => Ok(RerankMode::Listwise),
            other => Err(format!("unknown rerank mode `{other}` (expected pointwise, tournament or listwise)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct RerankStats {
    pub topics: usize,
    pub oracle_calls: usize,
    pub failures: usize,
    /// Head docs left in place because they could not be judged.
    pub pinned: usize,
}

/// `exp(lt) / (exp(lt) + exp(lf))` without overflow.
pub fn pointwise_prob(logit_true: f64, logit_false: f64) -> f64 {
    let d = logit_true - logit_false;
    if d >= 0.0 {
        1.0 / (1.0 + (-d).exp())
    } else {
        let e = d.exp();
        e / (1.0 + e)
    }
}

/// Head doc at position `i` scores `S_max + (H - i) * STITCH_EPSILON`; the
/// remaining docs keep their scores and order below it.
pub fn stitch_scores(reordered_head: &[String], original: &[RankedDoc]) -> Vec<RankedDoc> {
    if reordered_head.is_empty() {
        return original.to_vec();
    }
    let s_max = original.iter().map(|d| d.score).fold(f64::NEG_INFINITY, f64::max);
    let h = reordered_head.len();
    let in_head: HashSet<&str> = reordered_head.iter().map(String::as_str).collect();
    let mut out: Vec<RankedDoc> = reordered_head
        .iter()
        .enumerate()
        .map(|(i, d)| RankedDoc::new(d.clone(), s_max + (h - i) as f64 * STITCH_EPSILON))
        .collect();
    out.extend(original.iter().filter(|d| !in_head.contains(d.doc_id.as_str())).cloned());
    out
}

/// Place `judged` (head indices in their new order) into the slots not
/// taken by pinned indices, which stay where they were.
fn fill_slots(n: usize, pinned: &[usize], judged: &[usize]) -> Vec<usize> {
    let mut slots: Vec<Option<usize>> = vec![None; n];
    for &p in pinned {
        slots[p] = Some(p);
    }
    let mut it = judged.iter();
    slots
        .into_iter()
        .map(|s| s.unwrap_or_else(|| *it.next().expect("judged and pinned cover the head")))
        .collect()
}

fn topic_index(topics: &[Topic]) -> BTreeMap<&str, &Topic> {
    topics.iter().map(|t| (t.topic_id.as_str(), t)).collect()
}

/// Apply `reorder` to the head of every topic. `reorder` returns the new
/// order as head indices.
fn rerank_heads<F>(run: &Run, topics: &[Topic], depth: usize, stats: &mut RerankStats, mut reorder: F) -> Result<Run>
where
    F: FnMut(&Topic, &[RankedDoc], &mut RerankStats) -> Result<Vec<usize>>,
{
    let by_id = topic_index(topics);
    let mut out = Run::new(run.tag.clone());
    for (topic_id, list) in &run.topics {
        let Some(topic) = by_id.get(topic_id.as_str()) else {
            warn!("topic {topic_id} not in the topic file; left unchanged");
            out.topics.insert(topic_id.clone(), list.clone());
            continue;
        };
        stats.topics += 1;
        let head = &list[..depth.min(list.len())];
        let order = reorder(topic, head, stats)?;
        debug_assert_eq!(order.len(), head.len());
        let unchanged = order.iter().enumerate().all(|(i, &j)| i == j);
        let new_list = if unchanged {
            list.clone()
        } else {
            let ids: Vec<String> = order.iter().map(|&i| head[i].doc_id.clone()).collect();
            stitch_scores(&ids, list)
        };
        out.topics.insert(topic_id.clone(), new_list);
    }
    Ok(out)
}

/// Score the head with `scorer` on the query text and the document body.
/// Ties and unjudged docs keep their input positions.
pub fn rerank_pointwise(
    run: &Run,
    topics: &[Topic],
    corpus: &Corpus,
    scorer: &dyn PointwiseScorer,
    depth: usize,
) -> Result<(Run, RerankStats)> {
    if depth == 0 {
        return Err(Error::Config("rerank depth must be >= 1".into()));
    }
    let mut stats = RerankStats::default();
    let out = rerank_heads(run, topics, depth, &mut stats, |topic, head, stats| {
        let query = topic.query_text();
        let mut scored = Vec::with_capacity(head.len());
        let mut pinned = Vec::new();
        for (i, d) in head.iter().enumerate() {
            let Some(doc) = corpus.get(&d.doc_id) else {
                warn!("topic {}: doc {} missing from corpus; kept in place", topic.topic_id, d.doc_id);
                pinned.push(i);
                continue;
            };
            stats.oracle_calls += 1;
            match scorer.score(&query, &Candidate { id: &doc.doc_id, text: &doc.body }) {
                Ok(p) => scored.push((i, p)),
                Err(e) => {
                    warn!("topic {}: scoring {} failed ({e}); kept in place", topic.topic_id, d.doc_id);
                    stats.failures += 1;
                    pinned.push(i);
                }
            }
        }
        stats.pinned += pinned.len();
        scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        let judged: Vec<usize> = scored.into_iter().map(|(i, _)| i).collect();
        Ok(fill_slots(head.len(), &pinned, &judged))
    })?;
    Ok((out, stats))
}

/// Best-passage selection for every head doc, then heapsort over the chosen
/// passages. Docs without text keep their input positions.
pub fn rerank_tournament(
    run: &Run,
    topics: &[Topic],
    corpus: &Corpus,
    tokenizer: &dyn Tokenizer,
    oracle: &dyn ComparatorOracle,
    cfg: &RerankConfig,
) -> Result<(Run, RerankStats)> {
    cfg.validate()?;
    let mut stats = RerankStats::default();
    let out = rerank_heads(run, topics, cfg.depth, &mut stats, |topic, head, stats| {
        let mut chosen: Vec<(usize, String, String)> = Vec::with_capacity(head.len());
        let mut pinned = Vec::new();
        for (i, d) in head.iter().enumerate() {
            let tokens = match corpus.get(&d.doc_id) {
                Some(doc) => tokenizer.tokenize(&doc.body),
                None => Vec::new(),
            };
            if tokens.is_empty() {
                warn!("topic {}: no text for doc {}; kept in place", topic.topic_id, d.doc_id);
                pinned.push(i);
                continue;
            }
            let choice = select_best_passage(
                &d.doc_id,
                &tokens,
                &topic.title,
                &topic.description,
                oracle,
                cfg.passage_tokens,
            )?;
            stats.oracle_calls += choice.calls;
            stats.failures += choice.failures;
            let text = choice.passage.text(&tokens);
            chosen.push((i, choice.passage.passage_id, text));
        }
        stats.pinned += pinned.len();
        let cands: Vec<Candidate<'_>> = chosen.iter().map(|(_, id, text)| Candidate { id, text }).collect();
        let outcome = heapsort_rerank(
            &cands,
            &topic.title,
            &topic.description,
            oracle,
            cfg.heap_arity,
            cfg.top_sorted,
        )?;
        stats.oracle_calls += outcome.calls;
        stats.failures += outcome.failures;
        let judged: Vec<usize> = outcome.order.iter().map(|&k| chosen[k].0).collect();
        Ok(fill_slots(head.len(), &pinned, &judged))
    })?;
    Ok((out, stats))
}

/// One oracle call for the whole head. Anything other than a full
/// permutation of `0..n` leaves the input order.
pub fn rerank_listwise_once(head: &[Candidate<'_>], title: &str, description: &str, oracle: &dyn ListOracle) -> (Vec<usize>, bool) {
    let identity: Vec<usize> = (0..head.len()).collect();
    match oracle.rank(title, description, head) {
        Ok(perm) if is_permutation(&perm, head.len()) => (perm, true),
        Ok(perm) => {
            warn!("list oracle returned an invalid permutation {perm:?}; order kept");
            (identity, false)
        }
        Err(e) => {
            warn!("list oracle failed ({e}); order kept");
            (identity, false)
        }
    }
}

fn is_permutation(perm: &[usize], n: usize) -> bool {
    let mut seen = vec![false; n];
    perm.len() == n && perm.iter().all(|&i| i < n && !std::mem::replace(&mut seen[i], true))
}

/// [`rerank_listwise_once`] over each topic's head, using document bodies.
pub fn rerank_listwise(
    run: &Run,
    topics: &[Topic],
    corpus: &Corpus,
    oracle: &dyn ListOracle,
    depth: usize,
) -> Result<(Run, RerankStats)> {
    if depth == 0 {
        return Err(Error::Config("rerank depth must be >= 1".into()));
    }
    let mut stats = RerankStats::default();
    let out = rerank_heads(run, topics, depth, &mut stats, |topic, head, stats| {
        let (present, pinned): (Vec<usize>, Vec<usize>) = (0..head.len()).partition(|&i| corpus.get(&head[i].doc_id).is_some());
        stats.pinned += pinned.len();
        let cands: Vec<Candidate<'_>> = present
            .iter()
            .map(|&i| {
                let doc = corpus.get(&head[i].doc_id).expect("partitioned on presence");
                Candidate { id: &doc.doc_id, text: &doc.body }
            })
            .collect();
        if cands.is_empty() {
            return Ok((0..head.len()).collect());
        }
        stats.oracle_calls += 1;
        let (perm, ok) = rerank_listwise_once(&cands, &topic.title, &topic.description, oracle);
        if !ok {
            stats.failures += 1;
        }
        let judged: Vec<usize> = perm.iter().map(|&k| present[k]).collect();
        Ok(fill_slots(head.len(), &pinned, &judged))
    })?;
    Ok((out, stats))
}
