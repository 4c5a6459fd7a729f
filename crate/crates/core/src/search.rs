//! Late-interaction retrieval over a [`QuantizedIndex`].

use std::collections::{BTreeSet, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embed_io::TokenMatrix;
use crate::error::{Error, Result};
use crate::index::QuantizedIndex;
use crate::util::dot;

/// Passages scored per query.
pub const DEFAULT_K_PASSAGES: usize = 2500;
pub const DEFAULT_NPROBE: usize = 4;
/// Documents kept per topic after MaxP.
pub const DEFAULT_MAX_DOCS: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredPassage {
    pub passage_id: String,
    pub doc_id: String,
    pub score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SearchParams {
    pub k_passages: usize,
    /// Centroids probed per query token. Values above `k` probe everything.
    pub nprobe: usize,
    /// Score against stored raw vectors when the index has them.
    pub exact: bool,
}

impl Default for SearchParams {
    fn default() -> Self {
        SearchParams {
            k_passages: DEFAULT_K_PASSAGES,
            nprobe: DEFAULT_NPROBE,
            exact: false,
        }
    }
}

impl SearchParams {
    pub fn validate(&self) -> Result<()> {
        if self.k_passages == 0 || self.nprobe == 0 {
            return Err(Error::Config("k_passages and nprobe must be >= 1".into()));
        }
        Ok(())
    }
}

/// Sum over query rows of the best dot product against any document row.
/// Both slices are row-major with `dim` columns.
pub fn maxsim_rows(query: &[f32], doc: &[f32], dim: usize) -> f64 {
    let mut total = 0.0;
    for q in query.chunks_exact(dim) {
        let mut best = f64::NEG_INFINITY;
        for d in doc.chunks_exact(dim) {
            let s = dot(q, d);
            if s > best {
                best = s;
            }
        }
        if best.is_finite() {
            total += best;
        }
    }
    total
}

pub fn maxsim(q: &TokenMatrix, d: &TokenMatrix) -> Result<f64> {
    if q.dim() != d.dim() {
        return Err(Error::Dim {
            expected: d.dim(),
            actual: q.dim(),
        });
    }
    Ok(maxsim_rows(q.as_slice(), d.as_slice(), q.dim()))
}

/// Passage ordinals reachable from the `nprobe` best centroids (by dot
/// product) of each query token.
pub fn candidates(q: &TokenMatrix, index: &QuantizedIndex, nprobe: usize) -> Result<BTreeSet<u32>> {
    if q.dim() != index.dim() {
        return Err(Error::Dim {
            expected: index.dim(),
            actual: q.dim(),
        });
    }
    let k = index.k();
    let nprobe = nprobe.min(k);
    let mut probed = vec![false; k];
    let mut by_score: Vec<(f64, usize)> = Vec::with_capacity(k);
    for row in q.rows() {
        by_score.clear();
        by_score.extend(index.centroids.iter().enumerate().map(|(c, cv)| (dot(row, cv), c)));
        by_score.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        for &(_, c) in &by_score[..nprobe] {
            probed[c] = true;
        }
    }
    let mut out = BTreeSet::new();
    for (c, _) in probed.iter().enumerate().filter(|(_, &p)| p) {
        out.extend(index.postings(c).iter().map(|&t| index.passage_of(t)));
    }
    Ok(out)
}

fn rank_passages(scored: &mut [ScoredPassage]) {
    scored.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.passage_id.cmp(&b.passage_id)));
}

/// Score every candidate passage with MaxSim and return the best
/// `params.k_passages`, ties broken by ascending passage id.
pub fn search(q: &TokenMatrix, index: &QuantizedIndex, params: &SearchParams) -> Result<Vec<ScoredPassage>> {
    params.validate()?;
    let cands: Vec<u32> = candidates(q, index, params.nprobe)?.into_iter().collect();
    let dim = index.dim();
    let mut scored: Vec<ScoredPassage> = cands
        .par_iter()
        .map(|&p| {
            let entry = &index.passages()[p as usize];
            let vectors = index.passage_vectors(p as usize, params.exact);
            ScoredPassage {
                passage_id: entry.passage_id.clone(),
                doc_id: entry.doc_id.clone(),
                score: maxsim_rows(q.as_slice(), &vectors, dim),
            }
        })
        .collect();
    rank_passages(&mut scored);
    scored.truncate(params.k_passages);
    Ok(scored)
}

/// Document score = best passage score. Sorted descending, ties by doc id.
pub fn maxp_aggregate(passages: &[ScoredPassage]) -> Vec<(String, f64)> {
    let mut best: HashMap<&str, f64> = HashMap::new();
    for p in passages {
        best.entry(&p.doc_id)
            .and_modify(|s| {
                if p.score > *s {
                    *s = p.score;
                }
            })
            .or_insert(p.score);
    }
    let mut docs: Vec<(String, f64)> = best.into_iter().map(|(d, s)| (d.to_owned(), s)).collect();
    docs.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    docs
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{window_passages, Passage, WindowConfig};
    use crate::embed_io::synthetic_embed;
    use crate::index::{build_index, IndexConfig, Provenance};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, dim: usize) -> TokenMatrix {
        let data = (0..rows * dim).map(|_| rng.random::<f32>() * 2.0 - 1.0).collect();
        TokenMatrix::new("m", dim, data).unwrap()
    }

    /// Independent double loop in plain f64.
    fn brute_maxsim(q: &TokenMatrix, d: &TokenMatrix) -> f64 {
        let mut total = 0.0;
        for i in 0..q.n_rows() {
            let mut best = f64::NEG_INFINITY;
            for j in 0..d.n_rows() {
                let mut s = 0.0f64;
                for k in 0..q.dim() {
                    s += q.row(i)[k] as f64 * d.row(j)[k] as f64;
                }
                best = best.max(s);
            }
            total += best;
        }
        total
    }

    #[test]
    fn maxsim_self_match() {
        let toks: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
        let d = synthetic_embed("d", &toks, 16, 0);
        let q = synthetic_embed("q", &toks[1..2], 16, 0);
        assert!((maxsim(&q, &d).unwrap() - 1.0).abs() < 1e-6);
        let qq = synthetic_embed("q", &[toks[1].clone(), toks[1].clone()], 16, 0);
        assert_eq!(maxsim(&qq, &d).unwrap(), 2.0 * maxsim(&q, &d).unwrap());
    }

    #[test]
    fn maxsim_matches_double_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let q = random_matrix(&mut rng, 3, 8);
            let d = random_matrix(&mut rng, 5, 8);
            assert!((maxsim(&q, &d).unwrap() - brute_maxsim(&q, &d)).abs() < 1e-6);
        }
    }

    #[test]
    fn maxsim_adding_query_row_adds_its_best() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let q = random_matrix(&mut rng, 3, 6);
        let d = random_matrix(&mut rng, 4, 6);
        let extra = random_matrix(&mut rng, 1, 6);
        let mut data = q.as_slice().to_vec();
        data.extend_from_slice(extra.as_slice());
        let q2 = TokenMatrix::new("q", 6, data).unwrap();
        let delta = maxsim(&q2, &d).unwrap() - maxsim(&q, &d).unwrap();
        assert!((delta - brute_maxsim(&extra, &d)).abs() < 1e-9);
    }

    #[test]
    fn maxsim_dim_mismatch() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert!(maxsim(&random_matrix(&mut rng, 1, 4), &random_matrix(&mut rng, 1, 5)).is_err());
    }

    fn tiny_index(texts: &[&str], k: usize) -> (Vec<TokenMatrix>, Vec<Passage>, QuantizedIndex) {
        let mut ms = Vec::new();
        let mut table = Vec::new();
        for (i, t) in texts.iter().enumerate() {
            let toks = crate::corpus::tokenize(t);
            let p = window_passages(&format!("d{i}"), toks.len(), WindowConfig::default()).remove(0);
            ms.push(synthetic_embed(&p.passage_id, &toks, 16, 9));
            table.push(p);
        }
        let cfg = IndexConfig {
            k: Some(k),
            store_raw: true,
            ..Default::default()
        };
        let prov = Provenance {
            window: WindowConfig::default(),
            tokenizer_name: "whitespace".into(),
            encoder_tag: "t".into(),
        };
        let idx = build_index(&ms, &table, &cfg, prov).unwrap();
        (ms, table, idx)
    }

    #[test]
    fn full_probe_reaches_every_passage() {
        let (_, _, idx) = tiny_index(&["a b c", "d e", "f g h i"], 4);
        let q = synthetic_embed("q", &["a".to_string()], 16, 9);
        assert_eq!(candidates(&q, &idx, 4).unwrap().len(), 3);
        let empty = TokenMatrix::new("q", 16, vec![]).unwrap();
        assert!(candidates(&empty, &idx, 4).unwrap().is_empty());
    }

    #[test]
    fn single_probe_finds_the_matching_token() {
        let (_, _, idx) = tiny_index(&["alpha beta", "gamma delta", "eps zeta"], 6);
        let q = synthetic_embed("q", &["delta".to_string()], 16, 9);
        let c = candidates(&q, &idx, 1).unwrap();
        assert!(c.contains(&1), "{c:?}");
    }

    #[test]
    fn full_probe_exact_search_equals_brute_force() {
        let (ms, table, idx) = tiny_index(&["a b c", "c d", "e f a"], 3);
        let q = synthetic_embed("q", &crate::corpus::tokenize("a c"), 16, 9);
        let params = SearchParams {
            nprobe: usize::MAX,
            exact: true,
            ..Default::default()
        };
        let got = search(&q, &idx, &params).unwrap();
        let mut want: Vec<(String, f64)> = ms
            .iter()
            .zip(&table)
            .map(|(m, p)| (p.passage_id.clone(), brute_maxsim(&q, m)))
            .collect();
        want.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let got_ids: Vec<_> = got.iter().map(|p| p.passage_id.clone()).collect();
        let want_ids: Vec<_> = want.iter().map(|p| p.0.clone()).collect();
        assert_eq!(got_ids, want_ids);
        let top1 = search(&q, &idx, &SearchParams { k_passages: 1, ..params }).unwrap();
        assert_eq!(top1.len(), 1);
        assert_eq!(top1[0].passage_id, want_ids[0]);
    }

    #[test]
    fn exact_match_ranks_first() {
        let (_, _, idx) = tiny_index(&["red green", "blue yellow", "orange purple"], 2);
        let q = synthetic_embed("q", &["yellow".to_string()], 16, 9);
        let params = SearchParams {
            nprobe: usize::MAX,
            ..Default::default()
        };
        assert_eq!(search(&q, &idx, &params).unwrap()[0].doc_id, "d1");
    }

    #[test]
    fn maxp_examples() {
        let sp = |p: &str, d: &str, s: f64| ScoredPassage {
            passage_id: p.into(),
            doc_id: d.into(),
            score: s,
        };
        let out = maxp_aggregate(&[sp("A#0", "A", 0.3), sp("B#0", "B", 0.5), sp("A#1", "A", 0.9)]);
        assert_eq!(out, vec![("A".to_string(), 0.9), ("B".to_string(), 0.5)]);
        let one = maxp_aggregate(&[sp("x#0", "x", 0.1), sp("y#0", "y", 0.1)]);
        assert_eq!(one, vec![("x".to_string(), 0.1), ("y".to_string(), 0.1)]);
    }

    #[test]
    fn maxp_equals_group_by_max() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let passages: Vec<ScoredPassage> = (0..50)
            .map(|i| {
                let d = rng.random_range(0..10);
                ScoredPassage {
                    passage_id: format!("d{d}#{i}"),
                    doc_id: format!("d{d}"),
                    score: rng.random::<f64>(),
                }
            })
            .collect();
        let got = maxp_aggregate(&passages);
        let distinct: BTreeSet<_> = passages.iter().map(|p| &p.doc_id).collect();
        assert_eq!(got.len(), distinct.len());
        for (doc, score) in &got {
            let want = passages
                .iter()
                .filter(|p| &p.doc_id == doc)
                .map(|p| p.score)
                .fold(f64::NEG_INFINITY, f64::max);
            assert_eq!(*score, want);
        }
        assert!(got.windows(2).all(|w| w[0].1 >= w[1].1));
    }
}
