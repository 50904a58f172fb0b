use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::linalg::sq_dist;

/// One agglomeration step. Leaves are `0..m`; the cluster created by merge
/// `s` gets id `m + s`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Merge {
    pub a: usize,
    pub b: usize,
    /// Increase in within-cluster sum of squares caused by this merge.
    pub distance: f64,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dendrogram {
    pub n_leaves: usize,
    pub merges: Vec<Merge>,
}

impl Dendrogram {
    pub fn distances(&self) -> Vec<f64> {
        self.merges.iter().map(|m| m.distance).collect()
    }

    /// Leaf labels after undoing the last `k - 1` merges, numbered by first
    /// appearance.
    pub fn cut(&self, k: usize) -> Vec<usize> {
        let m = self.n_leaves;
        let k = k.clamp(1, m.max(1));
        let mut parent: Vec<usize> = (0..m + self.merges.len()).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        for (s, mg) in self.merges.iter().take(m - k).enumerate() {
            let id = m + s;
            let ra = find(&mut parent, mg.a);
            let rb = find(&mut parent, mg.b);
            parent[ra] = id;
            parent[rb] = id;
        }
        let mut map = std::collections::HashMap::new();
        (0..m)
            .map(|i| {
                let r = find(&mut parent, i);
                let next = map.len();
                *map.entry(r).or_insert(next)
            })
            .collect()
    }
}

/// Ward agglomeration of the rows of `points` using the Lance-Williams
/// update on merge costs. Ties go to the pair with the smallest cluster ids.
#[allow(clippy::needless_range_loop)] // symmetric fill reads best with indices
pub fn ward_linkage(points: &DMatrix<f64>) -> Dendrogram {
    let m = points.nrows();
    let pt = points.transpose();
    let dim = pt.nrows();
    let row = |i: usize| &pt.as_slice()[i * dim..(i + 1) * dim];

    let mut dist = vec![vec![0.0; m]; m];
    for i in 0..m {
        for j in i + 1..m {
            let d = 0.5 * sq_dist(row(i), row(j));
            dist[i][j] = d;
            dist[j][i] = d;
        }
    }
    let mut size = vec![1usize; m];
    let mut id: Vec<usize> = (0..m).collect();
    let mut active: Vec<bool> = vec![true; m];
    let mut merges = Vec::with_capacity(m.saturating_sub(1));

    for step in 0..m.saturating_sub(1) {
        let mut best: Option<(f64, usize, usize, usize, usize)> = None;
        for i in 0..m {
            if !active[i] {
                continue;
            }
            for j in i + 1..m {
                if !active[j] {
                    continue;
                }
                let key = (id[i].min(id[j]), id[i].max(id[j]));
                let better = match best {
                    None => true,
                    Some((d, _, _, a, b)) => dist[i][j] < d || (dist[i][j] == d && key < (a, b)),
                };
                if better {
                    best = Some((dist[i][j], i, j, key.0, key.1));
                }
            }
        }
        let (d, i, j, a, b) = best.expect("two active clusters remain");
        let (ni, nj) = (size[i] as f64, size[j] as f64);
        for k in 0..m {
            if !active[k] || k == i || k == j {
                continue;
            }
            let nk = size[k] as f64;
            let updated =
                ((ni + nk) * dist[k][i] + (nj + nk) * dist[k][j] - nk * d) / (ni + nj + nk);
            dist[k][i] = updated;
            dist[i][k] = updated;
        }
        active[j] = false;
        size[i] += size[j];
        id[i] = m + step;
        merges.push(Merge {
            a,
            b,
            distance: d,
            size: size[i],
        });
    }
    Dendrogram {
        n_leaves: m,
        merges,
    }
}
