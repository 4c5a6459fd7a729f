//! Judgment interfaces used by the rerankers, plus the concrete wire client
//! and deterministic mocks.

mod mock;
mod prompt;
mod wire;

pub use mock::{FailurePattern, MockOracle, MockOracleSpec};
pub use prompt::{build_best_of_prompt, parse_best_of_response, Prompt, SYSTEM_MESSAGE};
pub use wire::{OracleEndpoint, WireOracle};

/// A passage presented to an oracle. Wire oracles only see `text`; mocks
/// look up `id`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Candidate<'a> {
    pub id: &'a str,
    pub text: &'a str,
}

/// Why an oracle produced no usable answer. Rerankers absorb every variant
/// with the same fallback.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum OracleFailure {
    #[error("unusable response: {0}")]
    Unparseable(String),
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("oracle returned HTTP {0}")]
    Status(u16),
    #[error("{0}")]
    Spec(String),
    #[error("cannot compare {0} passages")]
    Arity(usize),
    #[error("injected failure on call {0}")]
    Injected(u64),
}

pub type Verdict = Result<usize, OracleFailure>;

/// Picks the most relevant of 2..=5 passages.
pub trait ComparatorOracle: Send + Sync {
    fn best_of(&self, title: &str, description: &str, passages: &[Candidate<'_>]) -> Verdict;
}

/// Relevance probability for one query/passage pair.
pub trait PointwiseScorer: Send + Sync {
    fn score(&self, query: &str, passage: &Candidate<'_>) -> Result<f64, OracleFailure>;
}

/// Orders a whole list in one call; returns a permutation of `0..n`, best first.
pub trait ListOracle: Send + Sync {
    fn rank(&self, title: &str, description: &str, passages: &[Candidate<'_>]) -> Result<Vec<usize>, OracleFailure>;
}

impl<T: ComparatorOracle + ?Sized> ComparatorOracle for &T {
    fn best_of(&self, title: &str, description: &str, passages: &[Candidate<'_>]) -> Verdict {
        (**self).best_of(title, description, passages)
    }
}

impl<T: ComparatorOracle + ?Sized> ComparatorOracle for Box<T> {
    fn best_of(&self, title: &str, description: &str, passages: &[Candidate<'_>]) -> Verdict {
        (**self).best_of(title, description, passages)
    }
}
