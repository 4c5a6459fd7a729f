//! Oracle-driven selection: the best-passage tournament and the k-ary
//! heapsort that orders the head of a run.

use crate::corpus::{window_passages, Passage, WindowConfig};
use crate::error::{Error, Result};
use crate::oracle::{Candidate, ComparatorOracle, OracleFailure};

/// Largest group a comparator accepts.
pub const MAX_GROUP: usize = 5;

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct HeapsortOutcome {
    /// Permutation of the input indices: extracted maxima first, then the
    /// residual heap array as left by the last sift-down.
    pub order: Vec<usize>,
    pub calls: usize,
    pub failures: usize,
}

/// Height of node `i` in an `arity`-ary heap of `n` nodes (0 for leaves).
fn node_height(i: usize, n: usize, arity: usize) -> usize {
    let (mut j, mut h) = (i, 0);
    while arity * j + 1 < n {
        j = arity * j + 1;
        h += 1;
    }
    h
}

fn internal_nodes(n: usize, arity: usize) -> usize {
    if n < 2 { 0 } else { (n - 2) / arity + 1 }
}

/// Worst-case comparator calls: one per level for every build sift-down plus
/// one per level for each extraction.
pub fn call_bound(n: usize, arity: usize, top_sorted: usize) -> usize {
    let build: usize = (0..internal_nodes(n, arity)).map(|i| node_height(i, n, arity)).sum();
    build + top_sorted.min(n) * node_height(0, n, arity)
}

struct Heap<'c, F> {
    slots: Vec<usize>,
    arity: usize,
    compare: &'c mut F,
    calls: usize,
    failures: usize,
}

impl<F> Heap<'_, F>
where
    F: FnMut(&[usize]) -> Result<usize, OracleFailure>,
{
    /// Parent listed first, so a failed comparison keeps it in place.
    fn sift_down(&mut self, mut i: usize, size: usize) -> Result<()> {
        loop {
            let first = self.arity * i + 1;
            if first >= size {
                return Ok(());
            }
            let last = (first + self.arity).min(size);
            let mut group = Vec::with_capacity(1 + last - first);
            group.push(self.slots[i]);
            group.extend_from_slice(&self.slots[first..last]);
            self.calls += 1;
            let winner = match (self.compare)(&group) {
                Ok(w) if w < group.len() => w,
                Ok(w) => {
                    return Err(Error::Invariant(format!(
                        "comparator returned index {w} for {} items",
                        group.len()
                    )))
                }
                Err(_) => {
                    self.failures += 1;
                    0
                }
            };
            if winner == 0 {
                return Ok(());
            }
            let child = first + winner - 1;
            self.slots.swap(i, child);
            i = child;
        }
    }
}

/// k-ary heapsort over `n` items in input order, extracting `top_sorted`
/// maxima. `compare` gets item indices (parent first, then children) and
/// returns the position of the best one; failures mean "first listed".
pub fn heapsort_order<F>(n: usize, arity: usize, top_sorted: usize, mut compare: F) -> Result<HeapsortOutcome>
where
    F: FnMut(&[usize]) -> Result<usize, OracleFailure>,
{
    if !(2..MAX_GROUP).contains(&arity) {
        return Err(Error::Config(format!("heap arity must be in 2..={}, got {arity}", MAX_GROUP - 1)));
    }
    let mut heap = Heap {
        slots: (0..n).collect(),
        arity,
        compare: &mut compare,
        calls: 0,
        failures: 0,
    };
    for i in (0..internal_nodes(n, arity)).rev() {
        heap.sift_down(i, n)?;
    }
    let mut extracted = Vec::with_capacity(top_sorted.min(n));
    let mut size = n;
    while extracted.len() < top_sorted && size > 0 {
        heap.slots.swap(0, size - 1);
        size -= 1;
        extracted.push(heap.slots[size]);
        heap.sift_down(0, size)?;
    }
    let bound = call_bound(n, arity, top_sorted);
    if heap.calls > bound {
        return Err(Error::Invariant(format!("heapsort made {} calls, bound is {bound}", heap.calls)));
    }
    extracted.extend_from_slice(&heap.slots[..size]);
    Ok(HeapsortOutcome {
        order: extracted,
        calls: heap.calls,
        failures: heap.failures,
    })
}

/// [`heapsort_order`] over passages judged by `oracle`.
pub fn heapsort_rerank(
    head: &[Candidate<'_>],
    title: &str,
    description: &str,
    oracle: &dyn ComparatorOracle,
    arity: usize,
    top_sorted: usize,
) -> Result<HeapsortOutcome> {
    let mut group = Vec::with_capacity(MAX_GROUP);
    heapsort_order(head.len(), arity, top_sorted, |items| {
        group.clear();
        group.extend(items.iter().map(|&i| head[i]));
        oracle.best_of(title, description, &group)
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PassageChoice {
    pub passage: Passage,
    pub calls: usize,
    pub failures: usize,
}

/// Window `tokens` into non-overlapping passages of `passage_tokens` and run
/// a single-elimination tournament in groups of up to five. A failed group
/// is won by its first passage, which is also the earliest in the document.
pub fn select_best_passage(
    doc_id: &str,
    tokens: &[String],
    title: &str,
    description: &str,
    oracle: &dyn ComparatorOracle,
    passage_tokens: usize,
) -> Result<PassageChoice> {
    let cfg = WindowConfig::new(passage_tokens, passage_tokens)?;
    let passages = window_passages(doc_id, tokens.len(), cfg);
    if passages.is_empty() {
        return Err(Error::Size(format!("document {doc_id} has no tokens")));
    }
    let texts: Vec<String> = passages.iter().map(|p| p.text(tokens)).collect();
    let (mut calls, mut failures) = (0, 0);
    let mut round: Vec<usize> = (0..passages.len()).collect();
    while round.len() > 1 {
        let mut next = Vec::with_capacity(round.len().div_ceil(MAX_GROUP));
        for group in round.chunks(MAX_GROUP) {
            if group.len() == 1 {
                next.push(group[0]);
                continue;
            }
            let cands: Vec<Candidate<'_>> = group
                .iter()
                .map(|&i| Candidate {
                    id: &passages[i].passage_id,
                    text: &texts[i],
                })
                .collect();
            calls += 1;
            let w = match oracle.best_of(title, description, &cands) {
                Ok(w) if w < group.len() => w,
                Ok(w) => return Err(Error::Invariant(format!("comparator returned index {w} for {} items", group.len()))),
                Err(_) => {
                    failures += 1;
                    0
                }
            };
            next.push(group[w]);
        }
        round = next;
    }
    Ok(PassageChoice {
        passage: passages[round[0]].clone(),
        calls,
        failures,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{FailurePattern, MockOracle, MockOracleSpec};
    use std::collections::HashMap;

    fn truthful(scores: &[f64]) -> impl FnMut(&[usize]) -> Result<usize, OracleFailure> + '_ {
        move |items| {
            let mut best = 0;
            for (p, &i) in items.iter().enumerate() {
                if scores[i] > scores[items[best]] {
                    best = p;
                }
            }
            Ok(best)
        }
    }

    fn permutations(n: usize) -> Vec<Vec<usize>> {
        if n == 0 {
            return vec![vec![]];
        }
        let mut out = Vec::new();
        for p in permutations(n - 1) {
            for pos in 0..=p.len() {
                let mut q = p.clone();
                q.insert(pos, n - 1);
                out.push(q);
            }
        }
        out
    }

    #[test]
    fn exhaustive_small_permutations() {
        for n in 1..=7 {
            for perm in permutations(n) {
                let scores: Vec<f64> = perm.iter().map(|&v| v as f64).collect();
                let mut want: Vec<usize> = (0..n).collect();
                want.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
                for top in 1..=n {
                    let out = heapsort_order(n, 4, top, truthful(&scores)).unwrap();
                    assert_eq!(&out.order[..top], &want[..top], "n={n} perm={perm:?} top={top}");
                    let mut all = out.order.clone();
                    all.sort_unstable();
                    assert_eq!(all, (0..n).collect::<Vec<_>>());
                }
            }
        }
    }

    #[test]
    fn other_arities_sort_too() {
        let scores: Vec<f64> = (0..30).map(|i| ((i * 7919) % 31) as f64).collect();
        let mut want: Vec<usize> = (0..30).collect();
        want.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
        for arity in 2..=4 {
            let out = heapsort_order(30, arity, 30, truthful(&scores)).unwrap();
            assert_eq!(out.order, want);
        }
        assert!(heapsort_order(3, 5, 1, truthful(&scores)).is_err());
    }

    #[test]
    fn budget_for_default_shape() {
        assert!(call_bound(30, 4, 20) <= 150);
        assert_eq!(call_bound(1, 4, 20), 0);
    }

    #[test]
    fn always_failure_only_swaps_root_and_last() {
        let out = heapsort_order(6, 4, 2, |_| Err(OracleFailure::Injected(0))).unwrap();
        // [0..6] -> swap 0,5 -> extract 0; [5,1,2,3,4] -> swap 0,4 -> extract 5
        assert_eq!(out.order, [0, 5, 4, 1, 2, 3]);
        assert_eq!(out.failures, out.calls);
    }

    #[test]
    fn out_of_range_winner_is_internal() {
        let err = heapsort_order(5, 4, 1, |_| Ok(9)).unwrap_err();
        assert!(err.is_internal());
    }

    fn doc_tokens(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("t{i}")).collect()
    }

    #[test]
    fn single_passage_needs_no_call() {
        let oracle = MockOracle::truthful(HashMap::new());
        let c = select_best_passage("d", &doc_tokens(400), "t", "q", &oracle, 450).unwrap();
        assert_eq!(c.passage.passage_id, "d#0");
        assert_eq!((c.calls, oracle.calls()), (0, 0));
    }

    #[test]
    fn tournament_finds_argmax() {
        for best in 0..7 {
            let scores: HashMap<String, f64> =
                (0..7).map(|i| (format!("d#{i}"), if i == best { 10.0 } else { i as f64 })).collect();
            let oracle = MockOracle::truthful(scores);
            let c = select_best_passage("d", &doc_tokens(7 * 450), "t", "q", &oracle, 450).unwrap();
            assert_eq!(c.passage.passage_id, format!("d#{best}"));
            assert_eq!(c.calls, 3);
        }
    }

    #[test]
    fn tournament_failure_picks_first() {
        let spec = MockOracleSpec::new(HashMap::new(), FailurePattern::Always);
        let oracle = MockOracle::new(spec);
        let c = select_best_passage("d", &doc_tokens(13 * 450), "t", "q", &oracle, 450).unwrap();
        assert_eq!(c.passage.passage_id, "d#0");
        assert_eq!(c.failures, c.calls);
    }
}
