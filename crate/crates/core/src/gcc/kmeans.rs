//! Lloyd's k-means with greedy k-means++ seeding and best-of-n restarts.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{GccError, Result};
use crate::linalg::sq_dist;
use crate::rng::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KMeansConfig {
    pub max_iter: usize,
    pub n_init: usize,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        Self {
            max_iter: 300,
            n_init: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    pub assignments: Vec<usize>,
    /// `k x d`, one centroid per row.
    pub centroids: DMatrix<f64>,
    pub inertia: f64,
    pub n_iter: usize,
}

/// Points of `x` as contiguous slices (columns of the transpose).
struct Points {
    data: DMatrix<f64>,
}

impl Points {
    fn new(x: &DMatrix<f64>) -> Self {
        Self {
            data: x.transpose(),
        }
    }

    fn n(&self) -> usize {
        self.data.ncols()
    }

    fn dim(&self) -> usize {
        self.data.nrows()
    }

    fn get(&self, i: usize) -> &[f64] {
        let d = self.dim();
        &self.data.as_slice()[i * d..(i + 1) * d]
    }
}

/// Greedy k-means++: each new centre is the best of `2 + ln k` candidates
/// drawn proportionally to squared distance from the chosen centres.
fn seed_plus_plus(pts: &Points, k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = pts.n();
    let trials = 2 + (k as f64).ln().floor() as usize;
    let first = rng.random_range(0..n);
    let mut centers = vec![pts.get(first).to_vec()];
    let mut chosen = vec![false; n];
    chosen[first] = true;
    let mut closest: Vec<f64> = (0..n).map(|i| sq_dist(pts.get(i), &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = closest.iter().sum();
        let pick = if total <= 0.0 {
            // all remaining points coincide with a centre
            (0..n).find(|&i| !chosen[i]).unwrap_or(0)
        } else {
            let mut best: Option<(f64, usize)> = None;
            for _ in 0..trials {
                let mut r = rng.random::<f64>() * total;
                let mut cand = n - 1;
                for (i, &c) in closest.iter().enumerate() {
                    if r < c {
                        cand = i;
                        break;
                    }
                    r -= c;
                }
                let pot: f64 = (0..n)
                    .map(|i| closest[i].min(sq_dist(pts.get(i), pts.get(cand))))
                    .sum();
                if best.is_none_or(|(b, _)| pot < b) {
                    best = Some((pot, cand));
                }
            }
            best.unwrap().1
        };
        chosen[pick] = true;
        let c = pts.get(pick).to_vec();
        for (i, cl) in closest.iter_mut().enumerate() {
            *cl = cl.min(sq_dist(pts.get(i), &c));
        }
        centers.push(c);
    }
    centers
}

fn nearest(p: &[f64], centers: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centers.iter().enumerate() {
        let d = sq_dist(p, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

fn lloyd(pts: &Points, k: usize, max_iter: usize, rng: &mut ChaCha8Rng) -> KMeansResult {
    let (n, dim) = (pts.n(), pts.dim());
    let mut centers = seed_plus_plus(pts, k, rng);
    let mut assign = vec![usize::MAX; n];
    let mut dists = vec![0.0; n];
    let mut n_iter = 0;
    for it in 0..max_iter.max(1) {
        n_iter = it + 1;
        let mut changed = false;
        for i in 0..n {
            let (j, d) = nearest(pts.get(i), &centers);
            changed |= assign[i] != j;
            assign[i] = j;
            dists[i] = d;
        }
        // empty clusters take the point farthest from its centre
        let mut sizes = vec![0usize; k];
        for &a in &assign {
            sizes[a] += 1;
        }
        for j in 0..k {
            if sizes[j] > 0 {
                continue;
            }
            let donor = (0..n)
                .filter(|&i| sizes[assign[i]] > 1)
                .max_by(|&a, &b| dists[a].total_cmp(&dists[b]).then(b.cmp(&a)));
            if let Some(i) = donor {
                sizes[assign[i]] -= 1;
                assign[i] = j;
                sizes[j] = 1;
                dists[i] = 0.0;
                changed = true;
            }
        }
        let mut sums = vec![vec![0.0; dim]; k];
        for i in 0..n {
            for (s, v) in sums[assign[i]].iter_mut().zip(pts.get(i)) {
                *s += v;
            }
        }
        for j in 0..k {
            if sizes[j] > 0 {
                let inv = 1.0 / sizes[j] as f64;
                centers[j] = sums[j].iter().map(|s| s * inv).collect();
            }
        }
        if !changed && it > 0 {
            break;
        }
    }
    let inertia = (0..n)
        .map(|i| sq_dist(pts.get(i), &centers[assign[i]]))
        .sum();
    KMeansResult {
        assignments: assign,
        centroids: DMatrix::from_fn(k, dim, |j, c| centers[j][c]),
        inertia,
        n_iter,
    }
}

/// Clusters the rows of `x` into `k` groups; returns the restart with the
/// lowest inertia (ties to the earliest restart).
pub fn kmeans(x: &DMatrix<f64>, k: usize, seed: u64, cfg: &KMeansConfig) -> Result<KMeansResult> {
    let n = x.nrows();
    if k == 0 || k > n {
        return Err(GccError::ClusterCount { k, n });
    }
    if cfg.n_init == 0 {
        return Err(GccError::Config("kmeans n_init must be >= 1".into()));
    }
    let pts = Points::new(x);
    let runs: Vec<KMeansResult> = (0..cfg.n_init)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, r as u64));
            lloyd(&pts, k, cfg.max_iter, &mut rng)
        })
        .collect();
    let best = runs
        .into_iter()
        .enumerate()
        .min_by(|a, b| a.1.inertia.total_cmp(&b.1.inertia).then(a.0.cmp(&b.0)))
        .map(|(_, r)| r)
        .expect("n_init >= 1");
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::ari;
    use rand_distr::{Distribution, Normal};

    fn blobs(
        seed: u64,
        per: usize,
        centers: &[[f64; 2]],
        sigma: f64,
    ) -> (DMatrix<f64>, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, sigma).unwrap();
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for (c, mu) in centers.iter().enumerate() {
            for _ in 0..per {
                rows.push([
                    mu[0] + noise.sample(&mut rng),
                    mu[1] + noise.sample(&mut rng),
                ]);
                labels.push(c);
            }
        }
        (DMatrix::from_fn(rows.len(), 2, |i, j| rows[i][j]), labels)
    }

    #[test]
    fn k_equals_n_has_zero_inertia() {
        let x = DMatrix::from_row_slice(4, 2, &[0.0, 0.0, 1.0, 0.0, 0.0, 3.0, 5.0, 5.0]);
        let r = kmeans(&x, 4, 1, &KMeansConfig::default()).unwrap();
        assert_eq!(r.inertia, 0.0);
        let mut a = r.assignments.clone();
        a.sort_unstable();
        assert_eq!(a, vec![0, 1, 2, 3]);
    }

    #[test]
    fn two_blobs_split_exactly() {
        let (x, labels) = blobs(3, 50, &[[0.0, 0.0], [10.0, 10.0]], 0.5);
        let r = kmeans(&x, 2, 7, &KMeansConfig::default()).unwrap();
        assert_eq!(ari(&r.assignments, &labels).unwrap(), 1.0);
        // each centroid equals the mean of its blob's generated points
        for c in 0..2 {
            let members: Vec<usize> = (0..100).filter(|&i| labels[i] == c).collect();
            let mean = [0, 1]
                .map(|j| members.iter().map(|&i| x[(i, j)]).sum::<f64>() / members.len() as f64);
            let cl = r.assignments[members[0]];
            for (j, m) in mean.iter().enumerate() {
                assert!((r.centroids[(cl, j)] - m).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn single_cluster_is_column_mean() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 3.0, 4.0, 5.0, 9.0]);
        let r = kmeans(&x, 1, 0, &KMeansConfig::default()).unwrap();
        assert!((r.centroids[(0, 0)] - 3.0).abs() < 1e-12);
        assert!((r.centroids[(0, 1)] - 5.0).abs() < 1e-12);
    }

    #[test]
    fn too_many_clusters() {
        let x = DMatrix::<f64>::zeros(3, 2);
        assert!(matches!(
            kmeans(&x, 4, 0, &KMeansConfig::default()),
            Err(GccError::ClusterCount { k: 4, n: 3 })
        ));
    }

    #[test]
    fn duplicate_points_still_fill_clusters() {
        let x = DMatrix::from_row_slice(4, 1, &[1.0, 1.0, 1.0, 2.0]);
        let r = kmeans(&x, 3, 0, &KMeansConfig::default()).unwrap();
        let mut used: Vec<usize> = r.assignments.clone();
        used.sort_unstable();
        used.dedup();
        assert_eq!(used.len(), 3);
        assert_eq!(r.inertia, 0.0);
    }

    #[test]
    fn restarts_are_reproducible() {
        let (x, _) = blobs(9, 30, &[[0.0, 0.0], [3.0, 0.0], [0.0, 3.0]], 1.0);
        let a = kmeans(&x, 3, 42, &KMeansConfig::default()).unwrap();
        let b = kmeans(&x, 3, 42, &KMeansConfig::default()).unwrap();
        assert_eq!(a, b);
    }
}
