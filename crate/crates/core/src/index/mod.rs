//! Quantized multi-vector index.
//!
//! Each token vector is stored as the id of its nearest centroid plus one
//! sign bit per dimension of the residual. The residual magnitude per
//! dimension is a single learned scale shared by all tokens. Postings map
//! each centroid to the tokens assigned to it.

mod kmeans;
mod pool;
mod quantize;
mod store;

use std::collections::{HashMap, HashSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use kmeans::{kmeans, Clustering};
pub use pool::pool_tokens;
pub use quantize::{
    code_bytes, compute_scales, quantize, reconstruct, reconstruct_into, train_centroids, Centroids, Scales,
    TokenCode,
};
pub use store::INDEX_FILES;

use crate::corpus::{Passage, WindowConfig};
use crate::embed_io::TokenMatrix;
use crate::error::{Error, Result};
use crate::util::mix_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IndexConfig {
    /// Number of centroids. `None` picks `2^ceil(log2(sqrt(tokens)))`.
    pub k: Option<usize>,
    pub pool_factor: usize,
    pub seed: u64,
    pub sample_size: usize,
    pub max_iters: usize,
    /// Keep the unquantized vectors for exact rescoring.
    pub store_raw: bool,
}

impl Default for IndexConfig {
    fn default() -> Self {
        IndexConfig {
            k: None,
            pool_factor: 1,
            seed: 0,
            sample_size: 1 << 16,
            max_iters: 20,
            store_raw: false,
        }
    }
}

impl IndexConfig {
    pub fn validate(&self) -> Result<()> {
        if self.pool_factor == 0 {
            return Err(Error::Config("pool_factor must be >= 1".into()));
        }
        if self.sample_size == 0 {
            return Err(Error::Config("sample_size must be >= 1".into()));
        }
        if self.k == Some(0) {
            return Err(Error::Config("k must be >= 1".into()));
        }
        Ok(())
    }
}

/// Default centroid count for a collection of `tokens` vectors.
pub fn default_k(tokens: usize) -> usize {
    let root = (tokens as f64).sqrt();
    let exp = root.log2().ceil().max(0.0) as u32;
    1usize << exp
}

/// Where the indexed vectors came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub window: WindowConfig,
    pub tokenizer_name: String,
    pub encoder_tag: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IndexMeta {
    pub format_version: u32,
    pub window: WindowConfig,
    pub tokenizer_name: String,
    pub encoder_tag: String,
    pub pool_factor: usize,
    pub dim: usize,
    pub k: usize,
    pub seed: u64,
    pub sample_size: usize,
    pub n_passages: usize,
    pub tokens_before_pooling: usize,
    pub tokens_indexed: usize,
    pub has_raw: bool,
}

/// One indexed passage and its contiguous token range in the code arrays.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PassageEntry {
    pub passage_id: String,
    pub doc_id: String,
    pub start: usize,
    pub length: usize,
    pub first_token: usize,
    pub n_tokens: usize,
}

impl PassageEntry {
    pub fn tokens(&self) -> std::ops::Range<usize> {
        self.first_token..self.first_token + self.n_tokens
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedIndex {
    pub meta: IndexMeta,
    pub centroids: Centroids,
    pub scales: Scales,
    centroid_ids: Vec<u32>,
    sign_bits: Vec<u8>,
    postings: Vec<Vec<u32>>,
    passages: Vec<PassageEntry>,
    token_passage: Vec<u32>,
    raw: Option<Vec<f32>>,
}

impl QuantizedIndex {
    pub fn dim(&self) -> usize {
        self.meta.dim
    }

    pub fn k(&self) -> usize {
        self.centroids.k()
    }

    pub fn n_tokens(&self) -> usize {
        self.centroid_ids.len()
    }

    pub fn passages(&self) -> &[PassageEntry] {
        &self.passages
    }

    pub fn postings(&self, centroid: usize) -> &[u32] {
        &self.postings[centroid]
    }

    pub fn has_raw(&self) -> bool {
        self.raw.is_some()
    }

    /// Passage ordinal owning a token.
    pub fn passage_of(&self, token: u32) -> u32 {
        self.token_passage[token as usize]
    }

    pub fn code(&self, token: usize) -> TokenCode {
        let nb = code_bytes(self.dim());
        TokenCode {
            centroid_id: self.centroid_ids[token],
            sign_bits: self.sign_bits[token * nb..(token + 1) * nb].to_vec(),
        }
    }

    /// Token vectors of a passage: raw when requested and stored, otherwise
    /// reconstructed from the codes.
    pub fn passage_vectors(&self, passage: usize, prefer_raw: bool) -> Vec<f32> {
        let dim = self.dim();
        let range = self.passages[passage].tokens();
        if prefer_raw {
            if let Some(raw) = &self.raw {
                return raw[range.start * dim..range.end * dim].to_vec();
            }
        }
        let nb = code_bytes(dim);
        let mut out = vec![0.0f32; range.len() * dim];
        for (t, o) in range.zip(out.chunks_exact_mut(dim)) {
            reconstruct_into(
                self.centroid_ids[t],
                &self.sign_bits[t * nb..(t + 1) * nb],
                &self.centroids,
                &self.scales,
                o,
            );
            // stored rows are unit-norm, so project the decoded vector back onto the sphere
            let n = crate::util::dot(o, o).sqrt() as f32;
            if n > 0.0 {
                o.iter_mut().for_each(|x| *x /= n);
            }
        }
        out
    }

    fn from_parts(
        meta: IndexMeta,
        centroids: Centroids,
        scales: Scales,
        centroid_ids: Vec<u32>,
        sign_bits: Vec<u8>,
        postings: Vec<Vec<u32>>,
        passages: Vec<PassageEntry>,
        raw: Option<Vec<f32>>,
    ) -> Result<Self> {
        let mut token_passage = vec![u32::MAX; centroid_ids.len()];
        let mut next = 0usize;
        for (p, e) in passages.iter().enumerate() {
            if e.first_token != next || e.n_tokens == 0 {
                return Err(Error::Format(format!("passage {} has a bad token range", e.passage_id)));
            }
            next += e.n_tokens;
            if next > token_passage.len() {
                return Err(Error::Format("passage table exceeds token count".into()));
            }
            token_passage[e.tokens()].fill(p as u32);
        }
        if next != centroid_ids.len() {
            return Err(Error::Format("passage table does not cover every token".into()));
        }
        let index = QuantizedIndex {
            meta,
            centroids,
            scales,
            centroid_ids,
            sign_bits,
            postings,
            passages,
            token_passage,
            raw,
        };
        index.check()?;
        Ok(index)
    }

    /// Structural invariants: postings partition the tokens by centroid.
    pub fn check(&self) -> Result<()> {
        let dim = self.dim();
        let k = self.k();
        if self.centroids.dim != dim || self.scales.per_dim.len() != dim {
            return Err(Error::Format("component dims disagree".into()));
        }
        if self.sign_bits.len() != self.n_tokens() * code_bytes(dim) {
            return Err(Error::Format("sign bit array has the wrong length".into()));
        }
        if self.postings.len() != k {
            return Err(Error::Format("postings count differs from k".into()));
        }
        if let Some(raw) = &self.raw {
            if raw.len() != self.n_tokens() * dim {
                return Err(Error::Format("raw vector store has the wrong length".into()));
            }
        }
        let mut seen = vec![false; self.n_tokens()];
        for (c, list) in self.postings.iter().enumerate() {
            for &t in list {
                let t = t as usize;
                if t >= seen.len() || seen[t] || self.centroid_ids[t] as usize != c {
                    return Err(Error::Format(format!("postings entry {t} of centroid {c} is invalid")));
                }
                seen[t] = true;
            }
        }
        if seen.iter().any(|&s| !s) {
            return Err(Error::Format("some token is missing from the postings".into()));
        }
        Ok(())
    }
}

/// Algorithm R over the token stream.
fn reservoir_sample(matrices: &[TokenMatrix], size: usize, seed: u64) -> Vec<f32> {
    let dim = matrices[0].dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sample: Vec<f32> = Vec::with_capacity(size.min(1 << 20) * dim);
    let mut seen = 0u64;
    for row in matrices.iter().flat_map(|m| m.rows()) {
        if (seen as usize) < size {
            sample.extend_from_slice(row);
        } else {
            let j = rng.random_range(0..=seen) as usize;
            if j < size {
                sample[j * dim..(j + 1) * dim].copy_from_slice(row);
            }
        }
        seen += 1;
    }
    sample
}

/// Pool, train, quantize and invert a collection of passage embeddings.
///
/// Passages keep the order of `embeddings`. Every passage id must appear in
/// `passage_table`.
pub fn build_index(
    embeddings: &[TokenMatrix],
    passage_table: &[Passage],
    cfg: &IndexConfig,
    provenance: Provenance,
) -> Result<QuantizedIndex> {
    cfg.validate()?;
    let Some(first) = embeddings.first() else {
        return Err(Error::Size("no embeddings to index".into()));
    };
    let dim = first.dim();
    let table: HashMap<&str, &Passage> = passage_table.iter().map(|p| (p.passage_id.as_str(), p)).collect();
    let mut ids = HashSet::with_capacity(embeddings.len());
    for m in embeddings {
        if m.dim() != dim {
            return Err(Error::Dim {
                expected: dim,
                actual: m.dim(),
            });
        }
        if m.is_empty() {
            return Err(Error::Size(format!("{} has no token vectors", m.passage_id)));
        }
        if !table.contains_key(m.passage_id.as_str()) {
            return Err(Error::Format(format!("{} is not in the passage table", m.passage_id)));
        }
        if !ids.insert(m.passage_id.as_str()) {
            return Err(Error::Dup(m.passage_id.clone()));
        }
    }
    let tokens_before_pooling: usize = embeddings.iter().map(TokenMatrix::n_rows).sum();

    let pooled: Vec<TokenMatrix> = if cfg.pool_factor > 1 {
        embeddings
            .par_iter()
            .map(|m| pool_tokens(m, cfg.pool_factor, mix_seed(cfg.seed, &m.passage_id)))
            .collect()
    } else {
        embeddings.to_vec()
    };
    let n_tokens: usize = pooled.iter().map(TokenMatrix::n_rows).sum();
    if n_tokens > u32::MAX as usize {
        return Err(Error::Size("more than 2^32 tokens".into()));
    }

    let sample = reservoir_sample(&pooled, cfg.sample_size, cfg.seed);
    let sample_n = sample.len() / dim;
    let k = cfg.k.unwrap_or_else(|| default_k(n_tokens)).min(sample_n);
    let centroids = train_centroids(&sample, dim, k, cfg.seed, cfg.max_iters)?;
    let residuals: Vec<f32> = sample
        .chunks_exact(dim)
        .flat_map(|v| {
            let c = centroids.get(centroids.nearest(v) as usize);
            v.iter().zip(c).map(|(a, b)| a - b).collect::<Vec<_>>()
        })
        .collect();
    let scales = compute_scales(&residuals, dim)?;

    let codes: Vec<Vec<TokenCode>> = pooled
        .par_iter()
        .map(|m| m.rows().map(|v| quantize(v, &centroids, &scales)).collect())
        .collect();

    let nb = code_bytes(dim);
    let mut centroid_ids = Vec::with_capacity(n_tokens);
    let mut sign_bits = Vec::with_capacity(n_tokens * nb);
    let mut postings = vec![Vec::new(); k];
    let mut passages = Vec::with_capacity(pooled.len());
    for (m, pcodes) in pooled.iter().zip(&codes) {
        let p = table[m.passage_id.as_str()];
        passages.push(PassageEntry {
            passage_id: p.passage_id.clone(),
            doc_id: p.doc_id.clone(),
            start: p.start,
            length: p.length,
            first_token: centroid_ids.len(),
            n_tokens: pcodes.len(),
        });
        for code in pcodes {
            postings[code.centroid_id as usize].push(centroid_ids.len() as u32);
            centroid_ids.push(code.centroid_id);
            sign_bits.extend_from_slice(&code.sign_bits);
        }
    }
    let raw = cfg
        .store_raw
        .then(|| pooled.iter().flat_map(|m| m.as_slice().iter().copied()).collect());

    let meta = IndexMeta {
        format_version: 1,
        window: provenance.window,
        tokenizer_name: provenance.tokenizer_name,
        encoder_tag: provenance.encoder_tag,
        pool_factor: cfg.pool_factor,
        dim,
        k,
        seed: cfg.seed,
        sample_size: cfg.sample_size,
        n_passages: passages.len(),
        tokens_before_pooling,
        tokens_indexed: n_tokens,
        has_raw: cfg.store_raw,
    };
    QuantizedIndex::from_parts(meta, centroids, scales, centroid_ids, sign_bits, postings, passages, raw)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::window_passages;
    use crate::embed_io::synthetic_embed;

    fn fixture(n_passages: usize, rows: usize) -> (Vec<TokenMatrix>, Vec<Passage>) {
        let mut ms = Vec::new();
        let mut table = Vec::new();
        for d in 0..n_passages {
            let doc = format!("d{d}");
            let p = window_passages(&doc, rows, WindowConfig::default()).remove(0);
            let toks: Vec<String> = (0..rows).map(|i| format!("w{}", (d * 7 + i * 3) % 11)).collect();
            ms.push(synthetic_embed(&p.passage_id, &toks, 8, 2));
            table.push(p);
        }
        (ms, table)
    }

    fn prov() -> Provenance {
        Provenance {
            window: WindowConfig::default(),
            tokenizer_name: "whitespace".into(),
            encoder_tag: "test".into(),
        }
    }

    #[test]
    fn default_k_examples() {
        assert_eq!(default_k(1), 1);
        assert_eq!(default_k(12), 4);
        assert_eq!(default_k(16), 4);
        assert_eq!(default_k(17), 8);
        assert_eq!(default_k(4000), 64);
    }

    #[test]
    fn counts_add_up() {
        let (ms, table) = fixture(3, 4);
        let cfg = IndexConfig {
            k: Some(2),
            ..Default::default()
        };
        let idx = build_index(&ms, &table, &cfg, prov()).unwrap();
        assert_eq!(idx.n_tokens(), 12);
        assert_eq!((0..idx.k()).map(|c| idx.postings(c).len()).sum::<usize>(), 12);
    }

    #[test]
    fn pooling_halves_codes() {
        let (ms, table) = fixture(3, 4);
        let cfg = IndexConfig {
            k: Some(2),
            pool_factor: 2,
            ..Default::default()
        };
        let idx = build_index(&ms, &table, &cfg, prov()).unwrap();
        assert_eq!(idx.n_tokens(), 6);
        assert_eq!(idx.meta.tokens_before_pooling, 12);
    }

    #[test]
    fn empty_stream_is_size_error() {
        assert!(matches!(
            build_index(&[], &[], &IndexConfig::default(), prov()),
            Err(Error::Size(_))
        ));
    }

    #[test]
    fn unknown_passage_rejected() {
        let (ms, mut table) = fixture(2, 3);
        table.pop();
        assert!(build_index(&ms, &table, &IndexConfig::default(), prov()).is_err());
    }

    #[test]
    fn raw_store_returns_original_vectors() {
        let (ms, table) = fixture(4, 5);
        let cfg = IndexConfig {
            store_raw: true,
            ..Default::default()
        };
        let idx = build_index(&ms, &table, &cfg, prov()).unwrap();
        assert_eq!(idx.passage_vectors(2, true), ms[2].as_slice());
        assert_eq!(idx.passage_vectors(2, false).len(), ms[2].as_slice().len());
    }

    #[test]
    fn token_provenance() {
        let (ms, table) = fixture(3, 4);
        let idx = build_index(&ms, &table, &IndexConfig::default(), prov()).unwrap();
        assert_eq!(idx.passage_of(0), 0);
        assert_eq!(idx.passage_of(5), 1);
        assert_eq!(idx.passage_of(11), 2);
        assert_eq!(idx.passages()[1].doc_id, "d1");
    }
}
