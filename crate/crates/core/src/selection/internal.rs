//! Label-free quality indices. Reported alongside a clustering for
//! reference; model selection does not rely on them.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::linalg::sq_dist;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InternalIndices {
    pub silhouette: f64,
    pub davies_bouldin: f64,
    pub calinski_harabasz: f64,
}

struct Groups {
    rows: DMatrix<f64>,
    dim: usize,
    labels: Vec<usize>,
    k: usize,
    sizes: Vec<usize>,
    centroids: Vec<Vec<f64>>,
}

impl Groups {
    fn new(x: &DMatrix<f64>, labels: &[usize]) -> Self {
        let k = labels.iter().max().map_or(0, |m| m + 1);
        let rows = x.transpose();
        let dim = rows.nrows();
        let mut sizes = vec![0; k];
        let mut centroids = vec![vec![0.0; dim]; k];
        for (i, &l) in labels.iter().enumerate() {
            sizes[l] += 1;
            for (c, v) in centroids[l]
                .iter_mut()
                .zip(&rows.as_slice()[i * dim..(i + 1) * dim])
            {
                *c += v;
            }
        }
        for (c, &s) in centroids.iter_mut().zip(&sizes) {
            if s > 0 {
                c.iter_mut().for_each(|v| *v /= s as f64);
            }
        }
        Self {
            rows,
            dim,
            labels: labels.to_vec(),
            k,
            sizes,
            centroids,
        }
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.rows.as_slice()[i * self.dim..(i + 1) * self.dim]
    }
}

/// Mean silhouette width with Euclidean distances; singletons score 0.
pub fn silhouette(x: &DMatrix<f64>, labels: &[usize]) -> f64 {
    let g = Groups::new(x, labels);
    let n = labels.len();
    if g.sizes.iter().filter(|&&s| s > 0).count() < 2 {
        return 0.0;
    }
    let mut total = 0.0;
    for i in 0..n {
        let li = g.labels[i];
        if g.sizes[li] <= 1 {
            continue;
        }
        let mut sums = vec![0.0; g.k];
        for j in 0..n {
            if j != i {
                sums[g.labels[j]] += sq_dist(g.row(i), g.row(j)).sqrt();
            }
        }
        let a = sums[li] / (g.sizes[li] - 1) as f64;
        let b = (0..g.k)
            .filter(|&c| c != li && g.sizes[c] > 0)
            .map(|c| sums[c] / g.sizes[c] as f64)
            .fold(f64::INFINITY, f64::min);
        let s = a.max(b);
        if s > 0.0 {
            total += (b - a) / s;
        }
    }
    total / n as f64
}

pub fn davies_bouldin(x: &DMatrix<f64>, labels: &[usize]) -> f64 {
    let g = Groups::new(x, labels);
    let live: Vec<usize> = (0..g.k).filter(|&c| g.sizes[c] > 0).collect();
    if live.len() < 2 {
        return 0.0;
    }
    let mut scatter = vec![0.0; g.k];
    for (i, &l) in g.labels.iter().enumerate() {
        scatter[l] += sq_dist(g.row(i), &g.centroids[l]).sqrt();
    }
    for c in &live {
        scatter[*c] /= g.sizes[*c] as f64;
    }
    let worst: f64 = live
        .iter()
        .map(|&a| {
            live.iter()
                .filter(|&&b| b != a)
                .map(|&b| {
                    let sep = sq_dist(&g.centroids[a], &g.centroids[b]).sqrt();
                    if sep == 0.0 {
                        f64::INFINITY
                    } else {
                        (scatter[a] + scatter[b]) / sep
                    }
                })
                .fold(0.0, f64::max)
        })
        .sum();
    worst / live.len() as f64
}

pub fn calinski_harabasz(x: &DMatrix<f64>, labels: &[usize]) -> f64 {
    let g = Groups::new(x, labels);
    let n = labels.len();
    let k = g.sizes.iter().filter(|&&s| s > 0).count();
    if k < 2 || n <= k {
        return 0.0;
    }
    let mean: Vec<f64> = (0..g.dim)
        .map(|c| (0..n).map(|i| g.row(i)[c]).sum::<f64>() / n as f64)
        .collect();
    let between: f64 = (0..g.k)
        .filter(|&c| g.sizes[c] > 0)
        .map(|c| g.sizes[c] as f64 * sq_dist(&g.centroids[c], &mean))
        .sum();
    let within: f64 = (0..n)
        .map(|i| sq_dist(g.row(i), &g.centroids[g.labels[i]]))
        .sum();
    if within == 0.0 {
        return f64::INFINITY;
    }
    (between / (k - 1) as f64) / (within / (n - k) as f64)
}

pub fn internal_indices(x: &DMatrix<f64>, labels: &[usize]) -> InternalIndices {
    InternalIndices {
        silhouette: silhouette(x, labels),
        davies_bouldin: davies_bouldin(x, labels),
        calinski_harabasz: calinski_harabasz(x, labels),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_separated_pairs() {
        let x = DMatrix::from_row_slice(4, 1, &[0.0, 1.0, 10.0, 11.0]);
        let l = [0, 0, 1, 1];
        // a = 1 for every point; b is 10.5 for the outer points, 9.5 for the inner ones
        let expect = (2.0 * (9.5 / 10.5) + 2.0 * (8.5 / 9.5)) / 4.0;
        assert!((silhouette(&x, &l) - expect).abs() < 1e-12);
        // scatter 0.5 each, separation 10
        assert!((davies_bouldin(&x, &l) - 0.1).abs() < 1e-12);
        // between = 2*25 + 2*25 = 100, within = 4 * 0.25 = 1
        assert!((calinski_harabasz(&x, &l) - 200.0).abs() < 1e-9);
    }
}
