//! Relevance judgments and the nDCG@k / Recall@k metrics.
//!
//! Topics without any relevant document are reported with a score of 0 but
//! left out of the mean, as are run topics that have no judgments at all.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};
use tracing::warn;

use crate::error::{Error, Result};
pub use crate::run::{read_run, write_run};
use crate::run::Run;

pub const DEFAULT_NDCG_DEPTH: usize = 20;
pub const DEFAULT_RECALL_DEPTH: usize = 1000;

/// topic id → doc id → grade. Unjudged docs are grade 0.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Qrels {
    pub topics: BTreeMap<String, HashMap<String, u32>>,
}

impl Qrels {
    pub fn grade(&self, topic: &str, doc: &str) -> u32 {
        self.topics
            .get(topic)
            .and_then(|m| m.get(doc))
            .copied()
            .unwrap_or(0)
    }

    pub fn parse(text: &str, context: &str) -> Result<Self> {
        let mut q = Qrels::default();
        for (i, line) in text.lines().enumerate() {
            let lineno = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 4 {
                return Err(Error::parse(context, lineno, format!("expected 4 fields, found {}", f.len())));
            }
            let raw: i64 = f[3]
                .parse()
                .map_err(|_| Error::parse(context, lineno, format!("grade `{}` is not an integer", f[3])))?;
            let grade = if raw < 0 {
                warn!("{context}:{lineno}: negative grade {raw} clamped to 0");
                0
            } else {
                u32::try_from(raw).map_err(|_| Error::parse(context, lineno, "grade out of range"))?
            };
            let topic = q.topics.entry(f[0].to_owned()).or_default();
            if let Some(old) = topic.insert(f[2].to_owned(), grade) {
                warn!("{context}:{lineno}: duplicate judgment for {} {} ({old} replaced by {grade})", f[0], f[2]);
            }
        }
        Ok(q)
    }
}

pub fn read_qrels(path: &Path) -> Result<Qrels> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Qrels::parse(&text, &path.display().to_string())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gain {
    /// `2^g - 1`
    #[default]
    Exponential,
    /// `g`
    Linear,
}

impl Gain {
    fn of(self, grade: u32) -> f64 {
        match self {
            Gain::Exponential => 2f64.powi(grade as i32) - 1.0,
            Gain::Linear => f64::from(grade),
        }
    }
}

impl std::str::FromStr for Gain {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "exponential" | "exp" => Ok(Gain::Exponential),
            "linear" | "lin" => Ok(Gain::Linear),
            other => Err(format!("unknown gain `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub metric: String,
    pub per_topic: BTreeMap<String, f64>,
    /// Mean over topics with at least one relevant document.
    pub mean: f64,
    pub evaluated: usize,
}

fn evaluate(run: &Run, qrels: &Qrels, metric: String, f: impl Fn(&str, &[String], &HashMap<String, u32>) -> Option<f64>) -> MetricReport {
    let mut per_topic = BTreeMap::new();
    let (mut sum, mut evaluated) = (0.0, 0usize);
    for (topic, list) in &run.topics {
        let Some(judged) = qrels.topics.get(topic) else {
            warn!("topic {topic} has no judgments; skipped");
            continue;
        };
        let docs: Vec<String> = list.iter().map(|d| d.doc_id.clone()).collect();
        match f(topic, &docs, judged) {
            Some(v) => {
                per_topic.insert(topic.clone(), v);
                sum += v;
                evaluated += 1;
            }
            None => {
                per_topic.insert(topic.clone(), 0.0);
            }
        }
    }
    let mean = if evaluated > 0 { sum / evaluated as f64 } else { 0.0 };
    MetricReport {
        metric,
        per_topic,
        mean,
        evaluated,
    }
}

/// nDCG@k with a `log2(i + 1)` discount. `None` for topics without relevant docs.
fn ndcg_topic(docs: &[String], judged: &HashMap<String, u32>, k: usize, gain: Gain) -> Option<f64> {
    let mut ideal: Vec<u32> = judged.values().copied().filter(|&g| g > 0).collect();
    if ideal.is_empty() {
        return None;
    }
    ideal.sort_unstable_by(|a, b| b.cmp(a));
    let discount = |i: usize| ((i + 2) as f64).log2();
    let dcg: f64 = docs
        .iter()
        .take(k)
        .enumerate()
        .map(|(i, d)| gain.of(judged.get(d).copied().unwrap_or(0)) / discount(i))
        .sum();
    let idcg: f64 = ideal.iter().take(k).enumerate().map(|(i, &g)| gain.of(g) / discount(i)).sum();
    Some(dcg / idcg)
}

pub fn ndcg_at(run: &Run, qrels: &Qrels, k: usize, gain: Gain) -> MetricReport {
    assert!(k >= 1, "cutoff must be >= 1");
    let name = match gain {
        Gain::Exponential => format!("nDCG@{k}"),
        Gain::Linear => format!("nDCG@{k}(linear)"),
    };
    evaluate(run, qrels, name, |_, docs, judged| ndcg_topic(docs, judged, k, gain))
}

pub fn recall_at(run: &Run, qrels: &Qrels, k: usize) -> MetricReport {
    assert!(k >= 1, "cutoff must be >= 1");
    evaluate(run, qrels, format!("R@{k}"), |_, docs, judged| {
        let relevant = judged.values().filter(|&&g| g > 0).count();
        if relevant == 0 {
            return None;
        }
        let found = docs
            .iter()
            .take(k)
            .filter(|d| judged.get(*d).is_some_and(|&g| g > 0))
            .count();
        Some(found as f64 / relevant as f64)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn run_of(topic: &str, docs: &[&str]) -> Run {
        let mut r = Run::new("t");
        let n = docs.len();
        r.insert_scored(topic, docs.iter().enumerate().map(|(i, d)| (d.to_string(), (n - i) as f64)));
        r
    }

    #[test]
    fn qrels_parsing_rules() {
        let q = Qrels::parse("t1 0 d1 2\nt1 0 d2 1\nt1 0 d2 3\nt1 0 d3 -1\n", "q").unwrap();
        assert_eq!(q.grade("t1", "d1"), 2);
        assert_eq!(q.grade("t1", "d2"), 3);
        assert_eq!(q.grade("t1", "d3"), 0);
        assert_eq!(q.grade("t1", "nope"), 0);
        assert!(matches!(Qrels::parse("t1 0 d1 high\n", "q"), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(Qrels::parse("t1 0 d1 2.5\n", "q"), Err(Error::Parse { .. })));
    }

    #[test]
    fn hand_ndcg_case() {
        let q = Qrels::parse("1 0 a 1\n1 0 c 2\n", "q").unwrap();
        let r = ndcg_at(&run_of("1", &["a", "b", "c"]), &q, 3, Gain::Exponential);
        let dcg = 1.0 + 3.0 / 2.0;
        let idcg = 3.0 + 1.0 / 3f64.log2();
        assert!((r.per_topic["1"] - dcg / idcg).abs() < 1e-12);
        assert!((r.mean - 0.6885).abs() < 1e-4);
    }

    #[test]
    fn ideal_and_empty_rankings() {
        let q = Qrels::parse("1 0 a 3\n1 0 b 1\n", "q").unwrap();
        assert_eq!(ndcg_at(&run_of("1", &["a", "b"]), &q, 20, Gain::Exponential).mean, 1.0);
        assert_eq!(ndcg_at(&run_of("1", &["x", "y"]), &q, 20, Gain::Exponential).mean, 0.0);
    }

    #[test]
    fn recall_examples() {
        let q = Qrels::parse("1 0 a 1\n1 0 b 1\n1 0 c 2\n1 0 d 1\n1 0 e 0\n", "q").unwrap();
        assert_eq!(recall_at(&run_of("1", &["a", "b", "c", "d"]), &q, 1000).mean, 1.0);
        assert_eq!(recall_at(&run_of("1", &["a", "x", "c", "y"]), &q, 1000).mean, 0.5);
    }

    #[test]
    fn topics_without_relevant_docs_are_excluded() {
        let q = Qrels::parse("1 0 a 1\n2 0 b 0\n", "q").unwrap();
        let mut r = run_of("1", &["a"]);
        r.insert_scored("2", [("b".to_string(), 1.0)]);
        r.insert_scored("3", [("c".to_string(), 1.0)]);
        let rep = ndcg_at(&r, &q, 20, Gain::Exponential);
        assert_eq!(rep.evaluated, 1);
        assert_eq!(rep.per_topic["2"], 0.0);
        assert!(!rep.per_topic.contains_key("3"));
        assert_eq!(rep.mean, 1.0);
    }

    #[test]
    fn linear_gain() {
        let q = Qrels::parse("1 0 a 1\n1 0 c 2\n", "q").unwrap();
        let r = ndcg_at(&run_of("1", &["a", "b", "c"]), &q, 3, Gain::Linear);
        let want = (1.0 + 2.0 / 2.0) / (2.0 + 1.0 / 3f64.log2());
        assert!((r.mean - want).abs() < 1e-12);
    }

    fn arb_case() -> impl Strategy<Value = (Vec<String>, Vec<(String, u32)>)> {
        (
            proptest::sample::subsequence((0..40).map(|i| format!("d{i}")).collect::<Vec<_>>(), 0..40)
                .prop_shuffle(),
            proptest::collection::vec((0usize..40, 0u32..4), 0..30),
        )
            .prop_map(|(docs, judged)| (docs, judged.into_iter().map(|(d, g)| (format!("d{d}"), g)).collect()))
    }

    proptest! {
        #[test]
        fn metrics_are_bounded_and_recall_monotone((docs, judged) in arb_case(), k in 1usize..40) {
            let mut run = Run::new("t");
            run.topics.insert("1".into(), docs.iter().enumerate().map(|(i, d)| crate::run::RankedDoc::new(d.clone(), -(i as f64))).collect());
            let mut q = Qrels::default();
            q.topics.insert("1".into(), judged.into_iter().collect());
            let n = ndcg_at(&run, &q, k, Gain::Exponential).mean;
            let r1 = recall_at(&run, &q, k).mean;
            let r2 = recall_at(&run, &q, k + 1).mean;
            prop_assert!((0.0..=1.0 + 1e-12).contains(&n));
            prop_assert!((0.0..=1.0).contains(&r1));
            prop_assert!(r2 >= r1);
        }
    }
}
