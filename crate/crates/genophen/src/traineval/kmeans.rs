//! Lloyd's k-means with k-means++ seeding, deterministic under a seed.

use crate::error::{Error, Result};
use crate::numcore::RngStream;

#[derive(Debug, Clone)]
pub struct KMeansResult {
    /// k x p centroid matrix.
    pub centroids: Vec<f64>,
    pub k: usize,
    pub dims: usize,
    /// Nearest centroid per point.
    pub assignment: Vec<usize>,
    /// Final within-cluster sum of squares.
    pub wcss: f64,
    /// Objective after each assignment step, non-increasing.
    pub wcss_history: Vec<f64>,
    pub iterations: usize,
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

const MAX_ITERS: usize = 300;

/// Cluster `n` points of dimension `p` (row-major) into `k` groups.
pub fn kmeans(points: &[f64], n: usize, p: usize, k: usize, seed: u64) -> Result<KMeansResult> {
    if n == 0 || k == 0 || points.len() != n * p {
        return Err(Error::Shape(format!(
            "kmeans inputs inconsistent: {} values for {n} x {p} points, k = {k}",
            points.len()
        )));
    }
    if n < k {
        return Err(Error::Data(format!("cannot form {k} clusters from {n} points")));
    }
    let row = |i: usize| &points[i * p..][..p];
    let mut rng = RngStream::new(seed, "kmeans");

    // k-means++ seeding.
    let mut centroids = vec![0.0; k * p];
    let first = rng.index(n);
    centroids[..p].copy_from_slice(row(first));
    let mut best_d2: Vec<f64> = (0..n).map(|i| dist2(row(i), &centroids[..p])).collect();
    for c in 1..k {
        let total: f64 = best_d2.iter().sum();
        let chosen = if total > 0.0 {
            let mut target = rng.uniform() * total;
            let mut pick = n - 1;
            for (i, &d) in best_d2.iter().enumerate() {
                if target < d {
                    pick = i;
                    break;
                }
                target -= d;
            }
            pick
        } else {
            // All remaining mass is zero (duplicate points); take the first
            // index that is not already a centroid.
            (0..n)
                .find(|&i| best_d2[i] > 0.0)
                .unwrap_or_else(|| c.min(n - 1))
        };
        centroids[c * p..(c + 1) * p].copy_from_slice(row(chosen));
        for i in 0..n {
            let d = dist2(row(i), &centroids[c * p..(c + 1) * p]);
            if d < best_d2[i] {
                best_d2[i] = d;
            }
        }
    }

    let mut assignment = vec![0usize; n];
    let mut wcss_history = Vec::new();
    let mut iterations = 0;
    loop {
        // Assignment step; ties go to the lowest centroid index.
        let mut changed = false;
        let mut wcss = 0.0;
        for i in 0..n {
            let mut best = 0;
            let mut best_d = dist2(row(i), &centroids[..p]);
            for c in 1..k {
                let d = dist2(row(i), &centroids[c * p..(c + 1) * p]);
                if d < best_d {
                    best_d = d;
                    best = c;
                }
            }
            if assignment[i] != best {
                assignment[i] = best;
                changed = true;
            }
            wcss += best_d;
        }
        wcss_history.push(wcss);
        iterations += 1;
        if (!changed && iterations > 1) || iterations >= MAX_ITERS {
            return Ok(KMeansResult {
                centroids,
                k,
                dims: p,
                assignment,
                wcss,
                wcss_history,
                iterations,
            });
        }

        // Update step.
        let mut counts = vec![0usize; k];
        let mut sums = vec![0.0; k * p];
        for i in 0..n {
            let c = assignment[i];
            counts[c] += 1;
            for (s, v) in sums[c * p..(c + 1) * p].iter_mut().zip(row(i)) {
                *s += v;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                for (dst, s) in centroids[c * p..(c + 1) * p].iter_mut().zip(&sums[c * p..]) {
                    *dst = s / counts[c] as f64;
                }
            }
        }
        // Re-seed empty clusters from the farthest point.
        for c in 0..k {
            if counts[c] == 0 {
                let mut far = 0;
                let mut far_d = -1.0;
                for i in 0..n {
                    let a = assignment[i];
                    let d = dist2(row(i), &centroids[a * p..(a + 1) * p]);
                    if d > far_d {
                        far_d = d;
                        far = i;
                    }
                }
                centroids[c * p..(c + 1) * p].copy_from_slice(row(far));
                assignment[far] = c;
            }
        }
    }
}
