//! Centroid assignment with one sign bit per residual dimension.

use serde::{Deserialize, Serialize};

use super::kmeans::{kmeans, nearest};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Centroids {
    pub dim: usize,
    pub data: Vec<f32>,
}

impl Centroids {
    pub fn new(dim: usize, data: Vec<f32>) -> Result<Self> {
        if dim == 0 || data.is_empty() || data.len() % dim != 0 {
            return Err(Error::Format(format!(
                "centroid data of length {} does not fit dim {dim}",
                data.len()
            )));
        }
        if data.iter().any(|x| x.is_nan()) {
            return Err(Error::Format("NaN centroid component".into()));
        }
        Ok(Centroids { dim, data })
    }

    pub fn k(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn get(&self, c: usize) -> &[f32] {
        &self.data[c * self.dim..(c + 1) * self.dim]
    }

    pub fn iter(&self) -> std::slice::ChunksExact<'_, f32> {
        self.data.chunks_exact(self.dim)
    }

    /// Nearest centroid by Euclidean distance, ties to the lowest id.
    pub fn nearest(&self, v: &[f32]) -> u32 {
        nearest(v, &self.data, self.dim) as u32
    }
}

/// Per-dimension magnitude used to reconstruct 1-bit residuals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scales {
    pub per_dim: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TokenCode {
    pub centroid_id: u32,
    /// `ceil(dim / 8)` bytes, bit `j` at `bytes[j / 8] >> (j % 8)`.
    pub sign_bits: Vec<u8>,
}

impl TokenCode {
    #[inline]
    pub fn bit(&self, j: usize) -> bool {
        sign_bit(&self.sign_bits, j)
    }
}

#[inline]
pub(crate) fn sign_bit(bits: &[u8], j: usize) -> bool {
    bits[j / 8] >> (j % 8) & 1 == 1
}

pub fn code_bytes(dim: usize) -> usize {
    dim.div_ceil(8)
}

/// k-means++ seeded Lloyd iterations over a flat sample.
pub fn train_centroids(sample: &[f32], dim: usize, k: usize, seed: u64, max_iters: usize) -> Result<Centroids> {
    let clustering = kmeans(sample, dim, k, seed, max_iters)?;
    Centroids::new(dim, clustering.centroids)
}

/// Mean absolute residual per dimension.
pub fn compute_scales(residuals: &[f32], dim: usize) -> Result<Scales> {
    if dim == 0 || residuals.len() % dim != 0 {
        return Err(Error::Format("residual data is not a multiple of dim".into()));
    }
    let n = residuals.len() / dim;
    if n == 0 {
        return Err(Error::Size("cannot fit scales on an empty sample".into()));
    }
    let mut sums = vec![0.0f64; dim];
    for r in residuals.chunks_exact(dim) {
        for (s, &x) in sums.iter_mut().zip(r) {
            *s += f64::from(x).abs();
        }
    }
    let per_dim: Vec<f32> = sums.iter().map(|s| (s / n as f64) as f32).collect();
    if per_dim.iter().any(|s| !s.is_finite()) {
        return Err(Error::Format("non-finite scale".into()));
    }
    Ok(Scales { per_dim })
}

pub fn quantize(v: &[f32], centroids: &Centroids, _scales: &Scales) -> TokenCode {
    let centroid_id = centroids.nearest(v);
    let c = centroids.get(centroid_id as usize);
    let mut sign_bits = vec![0u8; code_bytes(v.len())];
    for (j, (&x, &cx)) in v.iter().zip(c).enumerate() {
        if x - cx >= 0.0 {
            sign_bits[j / 8] |= 1 << (j % 8);
        }
    }
    TokenCode {
        centroid_id,
        sign_bits,
    }
}

/// `centroid + s ⊙ scales` with `s[j] = ±1` from the sign bits.
pub fn reconstruct_into(centroid_id: u32, bits: &[u8], centroids: &Centroids, scales: &Scales, out: &mut [f32]) {
    let c = centroids.get(centroid_id as usize);
    for (j, ((o, &cx), &s)) in out.iter_mut().zip(c).zip(&scales.per_dim).enumerate() {
        *o = if sign_bit(bits, j) { cx + s } else { cx - s };
    }
}

pub fn reconstruct(code: &TokenCode, centroids: &Centroids, scales: &Scales) -> Vec<f32> {
    let mut out = vec![0.0; centroids.dim];
    reconstruct_into(code.centroid_id, &code.sign_bits, centroids, scales, &mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::util::sq_dist;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grid_centroids() -> Centroids {
        Centroids::new(2, vec![0.0, 0.0, 1.0, 0.0, 0.0, 1.0, 1.0, 1.0, -1.0, -1.0]).unwrap()
    }

    #[test]
    fn scale_examples() {
        assert_eq!(compute_scales(&[0.0; 6], 2).unwrap().per_dim, vec![0.0, 0.0]);
        assert_eq!(compute_scales(&[1.0, -1.0, 1.0, 1.0], 2).unwrap().per_dim, vec![1.0, 1.0]);
        assert_eq!(compute_scales(&[-0.25, 0.5], 2).unwrap().per_dim, vec![0.25, 0.5]);
        assert!(matches!(compute_scales(&[], 2), Err(Error::Size(_))));
    }

    #[test]
    fn quantize_on_centroid_sets_all_bits() {
        let c = grid_centroids();
        let s = Scales { per_dim: vec![0.1, 0.1] };
        let code = quantize(&[1.0, 1.0], &c, &s);
        assert_eq!(code.centroid_id, 3);
        assert!(code.bit(0) && code.bit(1));
    }

    #[test]
    fn quantize_reads_signs() {
        let c = grid_centroids();
        let s = Scales { per_dim: vec![0.1, 0.1] };
        let code = quantize(&[0.2, -0.3], &c, &s);
        assert_eq!(code.centroid_id, 0);
        assert_eq!((code.bit(0), code.bit(1)), (true, false));
    }

    #[test]
    fn reconstruct_examples() {
        let c = Centroids::new(2, vec![0.0, 0.0]).unwrap();
        let code = TokenCode {
            centroid_id: 0,
            sign_bits: vec![0b01],
        };
        let ones = Scales { per_dim: vec![1.0, 1.0] };
        assert_eq!(reconstruct(&code, &c, &ones), vec![1.0, -1.0]);
        let zeros = Scales { per_dim: vec![0.0, 0.0] };
        let g = grid_centroids();
        let code = TokenCode {
            centroid_id: 4,
            sign_bits: vec![0b10],
        };
        assert_eq!(reconstruct(&code, &g, &zeros), g.get(4));
    }

    #[test]
    fn nearest_ties_go_to_lowest_id() {
        let c = Centroids::new(1, vec![-1.0, 1.0]).unwrap();
        assert_eq!(c.nearest(&[0.0]), 0);
    }

    #[test]
    fn residual_bits_never_hurt_on_average() {
        let dim = 16;
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let draw = |rng: &mut ChaCha8Rng, n: usize| -> Vec<f32> {
            (0..n * dim).map(|_| rng.random::<f32>() * 2.0 - 1.0).collect()
        };
        let train = draw(&mut rng, 4000);
        let cents = train_centroids(&train, dim, 32, 3, 25).unwrap();
        let residuals: Vec<f32> = train
            .chunks_exact(dim)
            .flat_map(|v| {
                let c = cents.get(cents.nearest(v) as usize).to_vec();
                v.iter().zip(c).map(|(a, b)| a - b).collect::<Vec<_>>()
            })
            .collect();
        let scales = compute_scales(&residuals, dim).unwrap();
        let test = draw(&mut rng, 1000);
        let (mut with_bits, mut centroid_only) = (0.0, 0.0);
        for v in test.chunks_exact(dim) {
            let code = quantize(v, &cents, &scales);
            with_bits += sq_dist(v, &reconstruct(&code, &cents, &scales)).sqrt();
            centroid_only += sq_dist(v, cents.get(code.centroid_id as usize)).sqrt();
        }
        assert!(with_bits <= centroid_only * 1.05, "{with_bits} vs {centroid_only}");
    }

    proptest! {
        #[test]
        fn quantize_reconstruct_fixpoint(v in proptest::collection::vec(-2.0f32..2.0, 2), s in proptest::collection::vec(0.01f32..0.4, 2)) {
            let c = grid_centroids();
            let scales = Scales { per_dim: s };
            let code = quantize(&v, &c, &scales);
            let again = quantize(&reconstruct(&code, &c, &scales), &c, &scales);
            // nonzero scales below half the centroid spacing keep the reconstruction in the same cell
            prop_assert_eq!(code, again);
        }
    }
}
