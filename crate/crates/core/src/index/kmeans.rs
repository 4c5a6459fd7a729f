//! Seeded Lloyd k-means with k-means++ initialization.
//!
//! Every arithmetic step runs in a fixed order, so results depend only on the
//! input order and the seed, never on the number of worker threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::util::sq_dist_lanes;

#[derive(Debug, Clone, PartialEq)]
pub struct Clustering {
    pub dim: usize,
    /// `k * dim` centroid components; each centroid is the mean of its members.
    pub centroids: Vec<f32>,
    /// Cluster id per input point. Every cluster has at least one member.
    pub assignments: Vec<u32>,
}

impl Clustering {
    pub fn k(&self) -> usize {
        self.centroids.len() / self.dim
    }

    pub fn centroid(&self, c: usize) -> &[f32] {
        &self.centroids[c * self.dim..(c + 1) * self.dim]
    }
}

/// Index of the nearest centroid in Euclidean distance; ties go to the lowest id.
pub fn nearest(v: &[f32], centroids: &[f32], dim: usize) -> usize {
    let mut best = 0;
    let mut best_d = f32::INFINITY;
    for (c, cv) in centroids.chunks_exact(dim).enumerate() {
        let d = sq_dist_lanes(v, cv);
        if d < best_d {
            best_d = d;
            best = c;
        }
    }
    best
}

fn assign_all(points: &[f32], centroids: &[f32], dim: usize) -> Vec<u32> {
    points
        .par_chunks_exact(dim)
        .map(|p| nearest(p, centroids, dim) as u32)
        .collect()
}

fn init_plus_plus(points: &[f32], dim: usize, k: usize, rng: &mut ChaCha8Rng) -> Vec<f32> {
    let n = points.len() / dim;
    let point = |i: usize| &points[i * dim..(i + 1) * dim];
    let mut chosen = vec![false; n];
    let mut centroids = Vec::with_capacity(k * dim);

    let first = rng.random_range(0..n as u64) as usize;
    chosen[first] = true;
    centroids.extend_from_slice(point(first));
    let mut d2: Vec<f64> = (0..n).map(|i| f64::from(sq_dist_lanes(point(i), point(first)))).collect();

    while centroids.len() < k * dim {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = None;
            for (i, &d) in d2.iter().enumerate() {
                acc += d;
                if d > 0.0 && acc > target {
                    pick = Some(i);
                    break;
                }
            }
            // rounding can leave target just above the final sum
            pick.unwrap_or_else(|| d2.iter().rposition(|&d| d > 0.0).unwrap())
        } else {
            // all remaining points coincide with a chosen centroid
            chosen.iter().position(|&c| !c).unwrap_or(0)
        };
        chosen[pick] = true;
        centroids.extend_from_slice(point(pick));
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(f64::from(sq_dist_lanes(point(i), point(pick))));
        }
    }
    centroids
}

/// Move points into empty clusters. Each empty cluster, in id order, takes
/// the point farthest from its current centroid (lowest index on ties) among
/// clusters with more than one member.
fn repair_empty(points: &[f32], dim: usize, k: usize, centroids: &[f32], assign: &mut [u32]) {
    let mut counts = vec![0usize; k];
    for &a in assign.iter() {
        counts[a as usize] += 1;
    }
    let empty: Vec<usize> = (0..k).filter(|&c| counts[c] == 0).collect();
    if empty.is_empty() {
        return;
    }
    // Distances are fixed and donor clusters only shrink, so a point that is
    // ineligible once stays ineligible: one pass in distance order suffices.
    let mut order: Vec<(f32, usize)> = points
        .chunks_exact(dim)
        .enumerate()
        .map(|(i, p)| {
            let a = assign[i] as usize;
            (sq_dist_lanes(p, &centroids[a * dim..(a + 1) * dim]), i)
        })
        .collect();
    order.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)));
    let mut next = order.iter().map(|&(_, i)| i);
    for c in empty {
        let i = next
            .by_ref()
            .find(|&i| counts[assign[i] as usize] >= 2)
            .expect("n >= k guarantees a cluster with two members");
        counts[assign[i] as usize] -= 1;
        assign[i] = c as u32;
        counts[c] = 1;
    }
}

fn means(points: &[f32], dim: usize, k: usize, assign: &[u32]) -> Vec<f32> {
    let mut sums = vec![0.0f64; k * dim];
    let mut counts = vec![0usize; k];
    for (p, &a) in points.chunks_exact(dim).zip(assign) {
        let a = a as usize;
        counts[a] += 1;
        for (s, &x) in sums[a * dim..(a + 1) * dim].iter_mut().zip(p) {
            *s += f64::from(x);
        }
    }
    sums.chunks_exact(dim)
        .zip(&counts)
        .flat_map(|(s, &n)| s.iter().map(move |&x| (x / n as f64) as f32))
        .collect()
}

/// Cluster `points` (row-major, `dim` columns) into exactly `k` non-empty
/// clusters. Runs until the assignment stops changing or `max_iters` rounds.
pub fn kmeans(points: &[f32], dim: usize, k: usize, seed: u64, max_iters: usize) -> Result<Clustering> {
    if dim == 0 || points.len() % dim != 0 {
        return Err(Error::Format("point data is not a multiple of dim".into()));
    }
    let n = points.len() / dim;
    if k == 0 || k > n {
        return Err(Error::Size(format!("k-means needs 1 <= k <= n, got k={k} n={n}")));
    }
    if points.iter().any(|x| !x.is_finite()) {
        return Err(Error::Format("non-finite component in k-means input".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = init_plus_plus(points, dim, k, &mut rng);
    let mut assign = assign_all(points, &centroids, dim);
    for _ in 0..max_iters {
        repair_empty(points, dim, k, &centroids, &mut assign);
        centroids = means(points, dim, k, &assign);
        let next = assign_all(points, &centroids, dim);
        if next == assign {
            break;
        }
        assign = next;
    }
    repair_empty(points, dim, k, &centroids, &mut assign);
    centroids = means(points, dim, k, &assign);
    Ok(Clustering {
        dim,
        centroids,
        assignments: assign,
    })
}
