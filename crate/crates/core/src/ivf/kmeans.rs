//! Lloyd's k-means with k-means++ seeding.

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::scoring::dot;

/// Relative perturbation used when an empty cluster takes over half of the largest one.
const SPLIT_EPS: f32 = 1.0 / 1024.0;

#[derive(Debug, Clone)]
pub struct KMeans {
    pub dim: usize,
    /// `k × dim`, row-major.
    pub centroids: Vec<f32>,
    pub assignments: Vec<usize>,
    pub iterations: usize,
}

impl KMeans {
    pub fn k(&self) -> usize {
        self.centroids.len() / self.dim
    }

    pub fn centroid(&self, c: usize) -> &[f32] {
        &self.centroids[c * self.dim..(c + 1) * self.dim]
    }
}

fn sq_dist(a: &[f32], b: &[f32]) -> f32 {
    let mut acc = 0.0f32;
    for (x, y) in a.iter().zip(b) {
        let d = x - y;
        acc += d * d;
    }
    acc
}

/// Index of the centroid with smallest squared L2 distance; lowest index on ties.
pub fn nearest_centroid(point: &[f32], centroids: &[f32], dim: usize, norms: &[f32]) -> usize {
    // argmin ||c||^2 - 2 x.c  ==  argmin ||x - c||^2
    let mut best = 0;
    let mut best_val = f32::INFINITY;
    for (c, centroid) in centroids.chunks_exact(dim).enumerate() {
        let v = norms[c] - 2.0 * dot(point, centroid);
        if v < best_val {
            best_val = v;
            best = c;
        }
    }
    best
}

fn centroid_norms(centroids: &[f32], dim: usize) -> Vec<f32> {
    centroids.chunks_exact(dim).map(|c| dot(c, c)).collect()
}

fn assign_all(data: &[f32], dim: usize, centroids: &[f32]) -> Vec<usize> {
    let norms = centroid_norms(centroids, dim);
    data.par_chunks_exact(dim)
        .map(|p| nearest_centroid(p, centroids, dim, &norms))
        .collect()
}

fn kmeans_plus_plus(data: &[f32], dim: usize, k: usize, rng: &mut ChaCha8Rng) -> Vec<f32> {
    let n = data.len() / dim;
    let point = |i: usize| &data[i * dim..(i + 1) * dim];
    let mut centroids = Vec::with_capacity(k * dim);
    centroids.extend_from_slice(point(rng.gen_range(0..n)));
    let mut d2: Vec<f32> = (0..n)
        .map(|i| sq_dist(point(i), &centroids[..dim]))
        .collect();
    for c in 1..k {
        let next = match WeightedIndex::new(d2.iter().map(|&w| w as f64)) {
            Ok(dist) => dist.sample(rng),
            // every remaining point coincides with a chosen centroid
            Err(_) => rng.gen_range(0..n),
        };
        centroids.extend_from_slice(point(next));
        let newest = &centroids[c * dim..(c + 1) * dim];
        d2.par_iter_mut().enumerate().for_each(|(i, w)| {
            let d = sq_dist(&data[i * dim..(i + 1) * dim], newest);
            if d < *w {
                *w = d;
            }
        });
    }
    centroids
}

/// Clusters `data` (`n × dim`, row-major) into `k` groups. Deterministic for a fixed seed.
pub fn train(data: &[f32], dim: usize, k: usize, max_iters: usize, seed: u64) -> Result<KMeans> {
    if dim == 0 || !data.len().is_multiple_of(dim) {
        return Err(Error::invalid_input(
            "training data is not a whole number of rows",
        ));
    }
    let n = data.len() / dim;
    if k == 0 {
        return Err(Error::invalid_input("k must be at least 1"));
    }
    if n < k {
        return Err(Error::invalid_input(format!(
            "need at least {k} training vectors, got {n}"
        )));
    }
    if max_iters == 0 {
        return Err(Error::invalid_input("max_iters must be at least 1"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = kmeans_plus_plus(data, dim, k, &mut rng);
    let mut assignments = vec![usize::MAX; n];
    let mut iterations = 0;

    for _ in 0..max_iters {
        let next = assign_all(data, dim, &centroids);
        let changed = next
            .iter()
            .zip(&assignments)
            .filter(|(a, b)| a != b)
            .count();
        assignments = next;
        if changed == 0 {
            break;
        }
        iterations += 1;

        let mut sums = vec![0.0f64; k * dim];
        let mut counts = vec![0usize; k];
        for (i, &c) in assignments.iter().enumerate() {
            counts[c] += 1;
            let row = &data[i * dim..(i + 1) * dim];
            for (s, &x) in sums[c * dim..(c + 1) * dim].iter_mut().zip(row) {
                *s += x as f64;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                let inv = 1.0 / counts[c] as f64;
                for j in 0..dim {
                    centroids[c * dim + j] = (sums[c * dim + j] * inv) as f32;
                }
            }
        }
        repair_empty(&mut centroids, &mut counts, dim);
    }

    // Lists must reflect the final centroids, whether or not we converged.
    let assignments = assign_all(data, dim, &centroids);
    Ok(KMeans {
        dim,
        centroids,
        assignments,
        iterations,
    })
}

/// Empty clusters take half of the currently largest cluster by splitting its
/// centroid into two slightly perturbed copies.
fn repair_empty(centroids: &mut [f32], counts: &mut [usize], dim: usize) {
    for empty in 0..counts.len() {
        if counts[empty] != 0 {
            continue;
        }
        let (largest, _) = counts
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)))
            .expect("k >= 1");
        if counts[largest] < 2 {
            continue;
        }
        for j in 0..dim {
            let v = centroids[largest * dim + j];
            let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
            centroids[empty * dim + j] = v * (1.0 + sign * SPLIT_EPS);
            centroids[largest * dim + j] = v * (1.0 - sign * SPLIT_EPS);
        }
        let half = counts[largest] / 2;
        counts[empty] = half;
        counts[largest] -= half;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_cluster_is_mean() {
        let data = vec![1.0, 2.0, 3.0, 4.0, 5.0, 9.0];
        let km = train(&data, 2, 1, 10, 0).unwrap();
        assert_eq!(km.assignments, vec![0, 0, 0]);
        assert!((km.centroid(0)[0] - 3.0).abs() < 1e-6);
        assert!((km.centroid(0)[1] - 5.0).abs() < 1e-6);
    }

    #[test]
    fn rejects_too_few_points() {
        assert!(train(&[1.0, 2.0], 2, 2, 10, 0).is_err());
        assert!(train(&[1.0, 2.0], 2, 1, 0, 0).is_err());
    }

    #[test]
    fn duplicate_points_do_not_panic() {
        let data = vec![1.0f32; 2 * 8];
        let km = train(&data, 2, 4, 5, 3).unwrap();
        assert_eq!(km.assignments.len(), 8);
    }

    #[test]
    fn deterministic_for_seed() {
        let data: Vec<f32> = (0..400).map(|i| ((i * 37) % 101) as f32 / 10.0).collect();
        let a = train(&data, 4, 8, 20, 11).unwrap();
        let b = train(&data, 4, 8, 20, 11).unwrap();
        assert_eq!(a.centroids, b.centroids);
        assert_eq!(a.assignments, b.assignments);
    }
}
