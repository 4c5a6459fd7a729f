//! Run fusion: reciprocal rank fusion over heterogeneous systems and
//! score-sum fusion of per-language runs into one multilingual run.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::run::{sort_ranked, RankedDoc, Run};

pub const DEFAULT_K_RRF: f64 = 60.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FusionMethod {
    Rrf,
    Score,
    ScoreNorm,
}

impl std::str::FromStr for FusionMethod {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "rrf" => Ok(FusionMethod::Rrf),
            "score" => Ok(FusionMethod::Score),
            "score-norm" => Ok(FusionMethod::ScoreNorm),
            other => Err(format!("unknown fusion method `{other}` (expected rrf, score or score-norm)")),
        }
    }
}

/// Sum contributions in sorted order so the result does not depend on the
/// order the runs were supplied in.
fn order_free_sum(parts: &mut [f64]) -> f64 {
    parts.sort_by(f64::total_cmp);
    parts.iter().sum()
}

fn all_topics(runs: &[Run]) -> BTreeSet<&str> {
    runs.iter().flat_map(|r| r.topics.keys().map(String::as_str)).collect()
}

fn fuse_with(runs: &[Run], tag: &str, contribution: impl Fn(usize, &RankedDoc) -> f64) -> Run {
    let mut out = Run::new(tag);
    for topic in all_topics(runs) {
        let mut parts: HashMap<&str, Vec<f64>> = HashMap::new();
        for run in runs {
            for (i, d) in run.topic(topic).unwrap_or(&[]).iter().enumerate() {
                parts.entry(&d.doc_id).or_default().push(contribution(i + 1, d));
            }
        }
        out.insert_scored(
            topic,
            parts.into_iter().map(|(d, mut p)| (d.to_owned(), order_free_sum(&mut p))),
        );
    }
    out
}

/// `Σ 1 / (k_rrf + rank)` over the runs containing each doc, ranks 1-based.
pub fn rrf_fuse(runs: &[Run], k_rrf: f64, tag: &str) -> Run {
    fuse_with(runs, tag, |rank, _| 1.0 / (k_rrf + rank as f64))
}

/// Per topic, map scores onto `[0, 1]`; a constant topic maps to 1.
pub fn minmax_normalize(run: &Run) -> Run {
    let mut out = Run::new(run.tag.clone());
    for (topic, list) in &run.topics {
        let (lo, hi) = list
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), d| (lo.min(d.score), hi.max(d.score)));
        let mapped = list
            .iter()
            .map(|d| {
                let s = if hi > lo { (d.score - lo) / (hi - lo) } else { 1.0 };
                RankedDoc::new(d.doc_id.clone(), s)
            })
            .collect();
        out.topics.insert(topic.clone(), mapped);
    }
    out
}

/// Pool docs across runs, summing the (optionally min-max normalized) scores
/// of docs that appear more than once. Absent docs contribute nothing.
pub fn score_fuse(runs: &[Run], normalize: bool, tag: &str) -> Run {
    if normalize {
        let normalized: Vec<Run> = runs.iter().map(minmax_normalize).collect();
        fuse_with(&normalized, tag, |_, d| d.score)
    } else {
        fuse_with(runs, tag, |_, d| d.score)
    }
}

pub fn fuse(runs: &[Run], method: FusionMethod, k_rrf: f64, tag: &str) -> Run {
    match method {
        FusionMethod::Rrf => rrf_fuse(runs, k_rrf, tag),
        FusionMethod::Score => score_fuse(runs, false, tag),
        FusionMethod::ScoreNorm => score_fuse(runs, true, tag),
    }
}

/// Re-sort a run's topics into canonical order.
pub fn canonicalize(run: &mut Run) {
    for list in run.topics.values_mut() {
        sort_ranked(list);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn run(tag: &str, topic: &str, docs: &[(&str, f64)]) -> Run {
        let mut r = Run::new(tag);
        r.insert_scored(topic, docs.iter().map(|(d, s)| (d.to_string(), *s)));
        r
    }

    fn ids(r: &Run, topic: &str) -> Vec<String> {
        r.topic(topic).unwrap().iter().map(|d| d.doc_id.clone()).collect()
    }

    #[test]
    fn rrf_single_and_doubled_runs_keep_order() {
        let a = run("a", "1", &[("x", 9.0), ("y", 3.0), ("z", 1.0)]);
        assert_eq!(ids(&rrf_fuse(&[a.clone()], 60.0, "f"), "1"), ["x", "y", "z"]);
        assert_eq!(ids(&rrf_fuse(&[a.clone(), a], 60.0, "f"), "1"), ["x", "y", "z"]);
    }

    #[test]
    fn rrf_hand_case() {
        let a = run("a", "1", &[("d", 3.0), ("p", 2.0), ("q", 1.0)]);
        let b = run("b", "1", &[("r", 3.0), ("s", 2.0), ("d", 1.0)]);
        let f = rrf_fuse(&[a, b], 60.0, "f");
        let d = f.topic("1").unwrap().iter().find(|x| x.doc_id == "d").unwrap();
        assert!((d.score - (1.0 / 61.0 + 1.0 / 63.0)).abs() < 1e-12);
        assert!((d.score - 0.0322664).abs() < 1e-6);
    }

    #[test]
    fn minmax_examples() {
        let r = minmax_normalize(&run("a", "1", &[("x", 4.0), ("y", 2.0)]));
        let s: Vec<f64> = r.topic("1").unwrap().iter().map(|d| d.score).collect();
        assert_eq!(s, [1.0, 0.0]);
        let one = minmax_normalize(&run("a", "1", &[("x", -3.0)]));
        assert_eq!(one.topic("1").unwrap()[0].score, 1.0);
    }

    #[test]
    fn score_fuse_examples() {
        let fa = run("fa", "1", &[("fa1", 0.9), ("fa2", 0.2)]);
        let ru = run("ru", "1", &[("ru1", 0.5)]);
        let zh = run("zh", "1", &[("zh1", 0.7), ("zh2", 0.1)]);
        assert_eq!(ids(&score_fuse(&[fa, ru, zh], false, "m"), "1"), ["fa1", "zh1", "ru1", "fa2", "zh2"]);

        let a = run("a", "1", &[("d", 0.4)]);
        let b = run("b", "1", &[("d", 0.5)]);
        assert!((score_fuse(&[a, b], false, "m").topic("1").unwrap()[0].score - 0.9).abs() < 1e-12);
    }

    #[test]
    fn normalized_score_fuse_puts_each_max_at_one() {
        let a = run("a", "1", &[("x", 100.0), ("y", 50.0), ("w", 0.0)]);
        let b = run("b", "1", &[("y", 0.3), ("z", 0.2), ("v", 0.1)]);
        let f = score_fuse(&[a, b], true, "m");
        let get = |id: &str| f.topic("1").unwrap().iter().find(|d| d.doc_id == id).unwrap().score;
        assert_eq!(get("x"), 1.0);
        assert!((get("y") - 1.5).abs() < 1e-12);
        assert!((get("z") - 0.5).abs() < 1e-12);
    }

    fn arb_run() -> impl Strategy<Value = Run> {
        proptest::collection::btree_map("[a-j]", -10.0f64..10.0, 1..10).prop_map(|docs| {
            let mut r = Run::new("r");
            r.insert_scored("t", docs);
            r
        })
    }

    proptest! {
        #[test]
        fn rrf_reads_ranks_only(r in arb_run(), other in arb_run(), scale in 0.1f64..10.0, shift in -5.0f64..5.0) {
            let mut rescaled = r.clone();
            for d in rescaled.topics.get_mut("t").unwrap() {
                d.score = (d.score * scale + shift).exp();
            }
            prop_assert_eq!(rrf_fuse(&[r, other.clone()], 60.0, "f"), rrf_fuse(&[rescaled, other], 60.0, "f"));
        }

        #[test]
        fn fusers_ignore_run_order(a in arb_run(), b in arb_run(), c in arb_run()) {
            let fwd = [a.clone(), b.clone(), c.clone()];
            let rev = [c, b, a];
            prop_assert_eq!(rrf_fuse(&fwd, 60.0, "f"), rrf_fuse(&rev, 60.0, "f"));
            prop_assert_eq!(score_fuse(&fwd, false, "f"), score_fuse(&rev, false, "f"));
            prop_assert_eq!(score_fuse(&fwd, true, "f"), score_fuse(&rev, true, "f"));
        }

        #[test]
        fn minmax_preserves_order(r in arb_run()) {
            let n = minmax_normalize(&r);
            prop_assert_eq!(ids(&n, "t"), ids(&r, "t"));
            prop_assert!(n.topic("t").unwrap().iter().all(|d| (0.0..=1.0).contains(&d.score)));
        }
    }
}
