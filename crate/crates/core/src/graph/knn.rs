use rayon::prelude::*;

use super::{DocGraph, GraphError, GraphKind, Result};
use crate::features::FeatureMatrix;

/// Smallest weight kept for non-positive cosine neighbours.
const MIN_WEIGHT: f64 = 1e-12;

/// Connects every document to its `k_nn` most cosine-similar documents
/// (ties to the lower index), symmetrized by union. Weights are the cosine
/// similarity clamped into (0, 1].
pub fn build_knn_graph(features: &FeatureMatrix, k_nn: usize) -> Result<DocGraph> {
    let n = features.n();
    if n < 2 || k_nn == 0 || k_nn > n - 1 {
        return Err(GraphError::KnnRange {
            k: k_nn,
            max: n.saturating_sub(1),
        });
    }
    let x = features.values();
    let norms: Vec<f64> = x.row_iter().map(|r| r.norm()).collect();
    // rows as contiguous columns of the transpose
    let xt = x.transpose();

    let lists: Vec<Vec<(usize, usize, f64)>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut sims: Vec<(usize, f64)> = (0..n)
                .filter(|&j| j != i)
                .map(|j| {
                    let denom = norms[i] * norms[j];
                    let s = if denom == 0.0 {
                        0.0
                    } else {
                        (xt.column(i).dot(&xt.column(j)) / denom).clamp(-1.0, 1.0)
                    };
                    (j, s)
                })
                .collect();
            sims.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
            sims.truncate(k_nn);
            sims.into_iter()
                .map(|(j, s)| (i, j, s.max(MIN_WEIGHT)))
                .collect()
        })
        .collect();
    Ok(DocGraph::from_edges(
        n,
        GraphKind::Knn,
        lists.into_iter().flatten(),
    ))
}
