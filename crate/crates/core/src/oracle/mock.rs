use std::collections::HashMap;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};

use super::{Candidate, ComparatorOracle, ListOracle, OracleFailure, PointwiseScorer, Verdict};
use crate::error::{Error, Result};
use crate::rerank::pointwise_prob;

/// Which call ordinals (1-based, counted across every method) fail.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FailurePattern {
    #[default]
    Never,
    Always,
    EveryNth(u64),
}

impl FailurePattern {
    pub fn fires(self, ordinal: u64) -> bool {
        match self {
            FailurePattern::Never => false,
            FailurePattern::Always => true,
            FailurePattern::EveryNth(n) => ordinal % n == 0,
        }
    }
}

impl std::str::FromStr for FailurePattern {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "never" | "truthful" => Ok(FailurePattern::Never),
            "always" | "always-fail" => Ok(FailurePattern::Always),
            _ => {
                let n = s
                    .strip_prefix("fail-every=")
                    .or_else(|| s.strip_prefix("every="))
                    .ok_or_else(|| format!("unknown failure pattern `{s}`"))?;
                match n.parse::<u64>() {
                    Ok(n) if n >= 1 => Ok(FailurePattern::EveryNth(n)),
                    _ => Err(format!("bad failure period `{n}`")),
                }
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MockOracleSpec {
    pub hidden_scores: HashMap<String, f64>,
    pub failure: FailurePattern,
}

impl MockOracleSpec {
    pub fn new(hidden_scores: HashMap<String, f64>, failure: FailurePattern) -> Self {
        MockOracleSpec { hidden_scores, failure }
    }

    /// Lines of `id score`; blank lines and `#` comments are skipped.
    pub fn parse_scores(text: &str, context: &str) -> Result<HashMap<String, f64>> {
        let mut out = HashMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 2 {
                return Err(Error::parse(context, i + 1, format!("expected `id score`, found {} fields", f.len())));
            }
            let s: f64 = f[1]
                .parse()
                .ok()
                .filter(|s: &f64| s.is_finite())
                .ok_or_else(|| Error::parse(context, i + 1, format!("bad score `{}`", f[1])))?;
            if out.insert(f[0].to_owned(), s).is_some() {
                return Err(Error::Dup(f[0].to_owned()));
            }
        }
        Ok(out)
    }

    pub fn read_scores(path: &Path) -> Result<HashMap<String, f64>> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_scores(&text, &path.display().to_string())
    }
}

/// Answers from hidden scores. Safe to share across threads; the ordinal
/// counter is the only mutable state.
#[derive(Debug, Default)]
pub struct MockOracle {
    spec: MockOracleSpec,
    calls: AtomicU64,
}

impl MockOracle {
    pub fn new(spec: MockOracleSpec) -> Self {
        MockOracle {
            spec,
            calls: AtomicU64::new(0),
        }
    }

    pub fn truthful(hidden_scores: HashMap<String, f64>) -> Self {
        Self::new(MockOracleSpec::new(hidden_scores, FailurePattern::Never))
    }

    pub fn spec(&self) -> &MockOracleSpec {
        &self.spec
    }

    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::SeqCst)
    }

    fn tick(&self) -> Result<(), OracleFailure> {
        let ordinal = self.calls.fetch_add(1, Ordering::SeqCst) + 1;
        if self.spec.failure.fires(ordinal) {
            Err(OracleFailure::Injected(ordinal))
        } else {
            Ok(())
        }
    }

    /// A passage id without its own score falls back to its document's.
    fn hidden(&self, id: &str) -> Result<f64, OracleFailure> {
        let scores = &self.spec.hidden_scores;
        scores
            .get(id)
            .or_else(|| id.rsplit_once('#').and_then(|(doc, _)| scores.get(doc)))
            .copied()
            .ok_or_else(|| OracleFailure::Spec(format!("no hidden score for `{id}`")))
    }
}

impl ComparatorOracle for MockOracle {
    fn best_of(&self, _title: &str, _description: &str, passages: &[Candidate<'_>]) -> Verdict {
        self.tick()?;
        if !(2..=5).contains(&passages.len()) {
            return Err(OracleFailure::Arity(passages.len()));
        }
        let mut best = (0, self.hidden(passages[0].id)?);
        for (i, p) in passages.iter().enumerate().skip(1) {
            let s = self.hidden(p.id)?;
            if s > best.1 {
                best = (i, s);
            }
        }
        Ok(best.0)
    }
}

impl PointwiseScorer for MockOracle {
    fn score(&self, _query: &str, passage: &Candidate<'_>) -> Result<f64, OracleFailure> {
        self.tick()?;
        Ok(pointwise_prob(self.hidden(passage.id)?, 0.0))
    }
}

impl ListOracle for MockOracle {
    fn rank(&self, _title: &str, _description: &str, passages: &[Candidate<'_>]) -> Result<Vec<usize>, OracleFailure> {
        self.tick()?;
        let scores = passages.iter().map(|p| self.hidden(p.id)).collect::<Result<Vec<_>, _>>()?;
        let mut order: Vec<usize> = (0..passages.len()).collect();
        order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
        Ok(order)
    }
}
