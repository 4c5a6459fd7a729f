//! Token pooling: shrink a passage's vectors by clustering them.

use super::kmeans::kmeans;
use crate::embed_io::TokenMatrix;

const POOL_KMEANS_ITERS: usize = 25;

/// Cluster the rows into `ceil(rows / factor)` groups and keep each group's
/// mean, renormalized to unit length. Output rows follow the smallest token
/// ordinal of each cluster. `factor == 1` returns the input unchanged.
pub fn pool_tokens(m: &TokenMatrix, factor: usize, seed: u64) -> TokenMatrix {
    assert!(factor >= 1, "pool factor must be at least 1");
    let n = m.n_rows();
    if factor == 1 || n <= 1 {
        return m.clone();
    }
    let k = n.div_ceil(factor);
    let dim = m.dim();
    let clustering =
        kmeans(m.as_slice(), dim, k, seed, POOL_KMEANS_ITERS).expect("1 <= k <= n and finite rows");

    let mut order = Vec::with_capacity(k);
    let mut seen = vec![false; k];
    for &a in &clustering.assignments {
        if !seen[a as usize] {
            seen[a as usize] = true;
            order.push(a as usize);
        }
    }
    let mut data = Vec::with_capacity(k * dim);
    for c in order {
        let mean = clustering.centroid(c);
        let norm = mean.iter().map(|&x| f64::from(x).powi(2)).sum::<f64>().sqrt();
        if norm > 0.0 {
            data.extend(mean.iter().map(|&x| (f64::from(x) / norm) as f32));
        } else {
            // opposite vectors can cancel; fall back to the first member
            let first = clustering.assignments.iter().position(|&a| a as usize == c).unwrap();
            data.extend_from_slice(m.row(first));
        }
    }
    TokenMatrix::new(m.passage_id.clone(), dim, data).expect("dim divides data")
}
