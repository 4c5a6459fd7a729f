//! Ranked runs and the six-column TREC run format.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct RankedDoc {
    pub doc_id: String,
    pub score: f64,
}

impl RankedDoc {
    pub fn new(doc_id: impl Into<String>, score: f64) -> Self {
        RankedDoc {
            doc_id: doc_id.into(),
            score,
        }
    }
}

/// Per-topic ranked lists. Within a topic doc ids are unique and scores are
/// non-increasing in list order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Run {
    pub tag: String,
    pub topics: BTreeMap<String, Vec<RankedDoc>>,
}

/// Sort by score descending, ties by doc id ascending.
pub fn sort_ranked(docs: &mut [RankedDoc]) {
    docs.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.doc_id.cmp(&b.doc_id)));
}

impl Run {
    pub fn new(tag: impl Into<String>) -> Self {
        Run {
            tag: tag.into(),
            topics: BTreeMap::new(),
        }
    }

    /// Insert a topic's scored docs, sorting them into run order.
    pub fn insert_scored(&mut self, topic_id: impl Into<String>, docs: impl IntoIterator<Item = (String, f64)>) {
        let mut list: Vec<RankedDoc> = docs.into_iter().map(|(d, s)| RankedDoc::new(d, s)).collect();
        sort_ranked(&mut list);
        self.topics.insert(topic_id.into(), list);
    }

    pub fn topic(&self, topic_id: &str) -> Option<&[RankedDoc]> {
        self.topics.get(topic_id).map(Vec::as_slice)
    }

    /// Keep at most `depth` docs per topic.
    pub fn truncate(&mut self, depth: usize) {
        for list in self.topics.values_mut() {
            list.truncate(depth);
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (topic, list) in &self.topics {
            let mut seen = HashSet::with_capacity(list.len());
            for (i, d) in list.iter().enumerate() {
                if !d.score.is_finite() {
                    return Err(Error::Consistency(format!("topic {topic}: non-finite score for {}", d.doc_id)));
                }
                if !seen.insert(d.doc_id.as_str()) {
                    return Err(Error::Consistency(format!("topic {topic}: duplicate doc {}", d.doc_id)));
                }
                if i > 0 && list[i - 1].score < d.score {
                    return Err(Error::Consistency(format!(
                        "topic {topic}: score increases at rank {}",
                        i + 1
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn to_trec_string(&self) -> Result<String> {
        self.validate()?;
        let tag = if self.tag.is_empty() { "run" } else { self.tag.as_str() };
        if tag.split_whitespace().count() != 1 {
            return Err(Error::Format(format!("run tag `{tag}` must be a single token")));
        }
        let mut out = String::new();
        for (topic, list) in &self.topics {
            for (i, d) in list.iter().enumerate() {
                writeln!(out, "{topic} Q0 {} {} {} {tag}", d.doc_id, i + 1, d.score).unwrap();
            }
        }
        Ok(out)
    }

    pub fn parse_trec(text: &str, context: &str) -> Result<Self> {
        let mut tag: Option<String> = None;
        let mut rows: BTreeMap<String, Vec<(usize, usize, RankedDoc)>> = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let lineno = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 6 {
                return Err(Error::parse(context, lineno, format!("expected 6 fields, found {}", fields.len())));
            }
            let rank: usize = fields[3]
                .parse()
                .ok()
                .filter(|&r| r >= 1)
                .ok_or_else(|| Error::parse(context, lineno, format!("bad rank `{}`", fields[3])))?;
            let score: f64 = fields[4]
                .parse()
                .ok()
                .filter(|s: &f64| s.is_finite())
                .ok_or_else(|| Error::parse(context, lineno, format!("bad score `{}`", fields[4])))?;
            tag.get_or_insert_with(|| fields[5].to_owned());
            rows.entry(fields[0].to_owned())
                .or_default()
                .push((rank, lineno, RankedDoc::new(fields[2], score)));
        }
        let mut run = Run::new(tag.unwrap_or_default());
        for (topic, mut entries) in rows {
            entries.sort_by_key(|e| e.0);
            let mut seen: HashMap<&str, usize> = HashMap::new();
            for (j, (rank, lineno, doc)) in entries.iter().enumerate() {
                if j > 0 && entries[j - 1].0 == *rank {
                    return Err(Error::Consistency(format!("{context}: line {lineno}: duplicate rank {rank} in topic {topic}")));
                }
                if j > 0 && entries[j - 1].2.score < doc.score {
                    return Err(Error::Consistency(format!(
                        "{context}: line {lineno}: score {} at rank {rank} exceeds the score at a better rank in topic {topic}",
                        doc.score
                    )));
                }
                if let Some(prev) = seen.insert(&doc.doc_id, *lineno) {
                    return Err(Error::Consistency(format!(
                        "{context}: line {lineno}: doc {} already listed on line {prev}",
                        doc.doc_id
                    )));
                }
            }
            run.topics.insert(topic, entries.into_iter().map(|e| e.2).collect());
        }
        Ok(run)
    }
}

pub fn read_run(path: &Path) -> Result<Run> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Run::parse_trec(&text, &path.display().to_string())
}

/// Ranks are emitted 1.. in list order; scores use the shortest exact decimal.
pub fn write_run(run: &Run, path: &Path) -> Result<()> {
    let text = run.to_trec_string()?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn five_fields_is_a_format_error() {
        let err = Run::parse_trec("1 Q0 d1 1 0.5\n", "x").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }), "{err}");
    }

    #[test]
    fn increasing_scores_are_inconsistent() {
        let text = "1 Q0 a 1 0.5 t\n1 Q0 b 2 0.7 t\n";
        assert!(matches!(Run::parse_trec(text, "x"), Err(Error::Consistency(_))));
    }

    #[test]
    fn lines_are_ordered_by_rank_not_position() {
        let text = "1 Q0 b 2 0.5 t\n1 Q0 a 1 0.7 t\n";
        let run = Run::parse_trec(text, "x").unwrap();
        assert_eq!(run.topic("1").unwrap()[0].doc_id, "a");
    }

    #[test]
    fn duplicate_doc_is_inconsistent() {
        let text = "1 Q0 a 1 0.7 t\n1 Q0 a 2 0.5 t\n";
        assert!(matches!(Run::parse_trec(text, "x"), Err(Error::Consistency(_))));
    }

    #[test]
    fn bad_rank_reports_line() {
        let text = "1 Q0 a 1 0.7 t\n1 Q0 b zero 0.5 t\n";
        assert!(matches!(Run::parse_trec(text, "x"), Err(Error::Parse { line: 2, .. })));
    }

    proptest! {
        #[test]
        fn trec_round_trip(topics in proptest::collection::btree_map("[a-z0-9]{1,4}", proptest::collection::vec(-1e6f64..1e6, 0..20), 1..5)) {
            let mut run = Run::new("tag");
            for (t, scores) in topics {
                run.insert_scored(t, scores.into_iter().enumerate().map(|(i, s)| (format!("doc{i}"), s)));
            }
            let text = run.to_trec_string().unwrap();
            let back = Run::parse_trec(&text, "mem").unwrap();
            // empty topics produce no lines, and with no lines there is no tag
            let mut want = run.clone();
            want.topics.retain(|_, l| !l.is_empty());
            if want.topics.is_empty() {
                want.tag.clear();
            }
            prop_assert_eq!(back, want);
        }
    }
}
