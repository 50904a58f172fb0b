//! External clustering quality: accuracy under the best cluster-to-class
//! matching, normalized mutual information and the adjusted Rand index.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("partition lengths differ: {pred} predicted vs {truth} true labels")]
    LengthMismatch { pred: usize, truth: usize },
    #[error("partitions are empty")]
    Empty,
}

pub type Result<T> = std::result::Result<T, MetricsError>;

/// Cluster labels for `n` items.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Partition {
    labels: Vec<usize>,
}

impl Partition {
    pub fn new(labels: Vec<usize>) -> Self {
        Self { labels }
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Relabels to `0..k` in order of first appearance.
    pub fn canonical(&self) -> Partition {
        Partition::new(canonicalize(&self.labels).0)
    }

    pub fn num_clusters(&self) -> usize {
        canonicalize(&self.labels).1
    }
}

fn canonicalize(labels: &[usize]) -> (Vec<usize>, usize) {
    let mut map = BTreeMap::new();
    let mut out = Vec::with_capacity(labels.len());
    for &l in labels {
        let next = map.len();
        out.push(*map.entry(l).or_insert(next));
    }
    (out, map.len())
}

/// Contingency counts `table[pred][truth]` over canonical labels.
fn contingency(pred: &[usize], truth: &[usize]) -> Result<Vec<Vec<u64>>> {
    if pred.len() != truth.len() {
        return Err(MetricsError::LengthMismatch {
            pred: pred.len(),
            truth: truth.len(),
        });
    }
    if pred.is_empty() {
        return Err(MetricsError::Empty);
    }
    let (p, kp) = canonicalize(pred);
    let (t, kt) = canonicalize(truth);
    let mut table = vec![vec![0u64; kt]; kp];
    for (a, b) in p.into_iter().zip(t) {
        table[a][b] += 1;
    }
    Ok(table)
}

/// Minimum-cost assignment of rows to distinct columns (`rows <= cols`),
/// via shortest augmenting paths with dual potentials. Returns the column
/// for each row.
pub fn min_cost_assignment(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    if n == 0 {
        return Vec::new();
    }
    let m = cost[0].len();
    assert!(n <= m, "more rows than columns");
    // 1-based arrays; column 0 is a virtual root
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut owner = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        owner[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut result = vec![0; n];
    for j in 1..=m {
        if owner[j] != 0 {
            result[owner[j] - 1] = j - 1;
        }
    }
    result
}

/// Best one-to-one matching of predicted clusters to classes, as
/// `(pred_label, truth_label)` pairs over canonical labels.
pub fn best_matching(pred: &[usize], truth: &[usize]) -> Result<Vec<(usize, usize)>> {
    let table = contingency(pred, truth)?;
    let (kp, kt) = (table.len(), table[0].len());
    let size = kp.max(kt);
    let max = table.iter().flatten().copied().max().unwrap_or(0) as f64;
    let cost: Vec<Vec<f64>> = (0..size)
        .map(|a| {
            (0..size)
                .map(|b| max - table.get(a).and_then(|r| r.get(b)).copied().unwrap_or(0) as f64)
                .collect()
        })
        .collect();
    Ok(min_cost_assignment(&cost)
        .into_iter()
        .enumerate()
        .filter(|&(a, b)| a < kp && b < kt)
        .collect())
}

/// Fraction of items whose cluster maps to their class under the optimal
/// matching.
pub fn accuracy(pred: &[usize], truth: &[usize]) -> Result<f64> {
    let table = contingency(pred, truth)?;
    let hits: u64 = best_matching(pred, truth)?
        .into_iter()
        .map(|(a, b)| table[a][b])
        .sum();
    Ok(hits as f64 / pred.len() as f64)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NmiNorm {
    #[default]
    Arithmetic,
    Geometric,
    Min,
    Max,
}

/// Mutual information over the mean of the two entropies (natural log).
pub fn nmi(pred: &[usize], truth: &[usize]) -> Result<f64> {
    nmi_with(pred, truth, NmiNorm::Arithmetic)
}

pub fn nmi_with(pred: &[usize], truth: &[usize], norm: NmiNorm) -> Result<f64> {
    let table = contingency(pred, truth)?;
    let n = pred.len() as f64;
    let rows: Vec<f64> = table.iter().map(|r| r.iter().sum::<u64>() as f64).collect();
    let cols: Vec<f64> = (0..table[0].len())
        .map(|b| table.iter().map(|r| r[b]).sum::<u64>() as f64)
        .collect();
    let entropy = |m: &[f64]| -> f64 {
        m.iter()
            .filter(|&&c| c > 0.0)
            .map(|&c| -(c / n) * (c / n).ln())
            .sum()
    };
    let (hp, ht) = (entropy(&rows), entropy(&cols));
    if rows.len() == 1 && cols.len() == 1 {
        return Ok(1.0);
    }
    if rows.len() == 1 || cols.len() == 1 {
        return Ok(0.0);
    }
    let mut mi = 0.0;
    for (a, r) in table.iter().enumerate() {
        for (b, &c) in r.iter().enumerate() {
            if c > 0 {
                let c = c as f64;
                mi += (c / n) * (n * c / (rows[a] * cols[b])).ln();
            }
        }
    }
    let denom = match norm {
        NmiNorm::Arithmetic => 0.5 * (hp + ht),
        NmiNorm::Geometric => (hp * ht).sqrt(),
        NmiNorm::Min => hp.min(ht),
        NmiNorm::Max => hp.max(ht),
    };
    Ok((mi / denom).clamp(0.0, 1.0))
}

fn comb2(x: u64) -> f64 {
    (x as f64) * (x as f64 - 1.0) / 2.0
}

/// Adjusted Rand index by pair counting on the contingency table.
pub fn ari(pred: &[usize], truth: &[usize]) -> Result<f64> {
    let table = contingency(pred, truth)?;
    let n = pred.len() as u64;
    let index: f64 = table.iter().flatten().map(|&c| comb2(c)).sum();
    let a: f64 = table.iter().map(|r| comb2(r.iter().sum())).sum();
    let b: f64 = (0..table[0].len())
        .map(|j| comb2(table.iter().map(|r| r[j]).sum()))
        .sum();
    let total = comb2(n);
    if total == 0.0 {
        return Ok(1.0);
    }
    let expected = a * b / total;
    let max = 0.5 * (a + b);
    if max == expected {
        // both partitions trivial (all singletons or one cluster) and equal
        return Ok(1.0);
    }
    Ok((index - expected) / (max - expected))
}

/// The three scores reported together.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub acc: f64,
    pub nmi: f64,
    pub ari: f64,
}

pub fn score_all(pred: &[usize], truth: &[usize]) -> Result<Scores> {
    Ok(Scores {
        acc: accuracy(pred, truth)?,
        nmi: nmi(pred, truth)?,
        ari: ari(pred, truth)?,
    })
}
