//! Choosing `k` by over-segmentation plus a Ward dendrogram over the
//! centroids, and choosing `p` by sweeping the propagation power.
//!
//! The p-sweep scores each fit by its *cluster loss* `‖Y^p W - G F‖²`, the
//! clustering half of the objective. The reconstruction half shrinks as
//! smoothing flattens `Y^p`, so it would always favour large `p`.

mod internal;
mod ward;

use std::fmt::Write as _;
use std::ops::RangeInclusive;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::FeatureMatrix;
use crate::gcc::{fit_gcc, GccConfig, GccError, GccState};
use crate::propagation::{PropagationError, Propagator};

pub use internal::{
    calinski_harabasz, davies_bouldin, internal_indices, silhouette, InternalIndices,
};
pub use ward::{ward_linkage, Dendrogram, Merge};

#[derive(Debug, Error)]
pub enum SelectionError {
    #[error(transparent)]
    Gcc(#[from] GccError),
    #[error(transparent)]
    Propagation(#[from] PropagationError),
    #[error("invalid selection settings: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, SelectionError>;

/// Default over-segmentation size: `min(500, n / 4, d)`.
pub fn default_oversegmentation(n: usize, d: usize) -> usize {
    500.min(n / 4).min(d).max(2)
}

#[derive(Debug, Clone)]
pub struct Oversegmentation {
    /// Centroids of the non-empty clusters, in the embedding space `Y W`.
    pub centroids: DMatrix<f64>,
    /// The same centroids mapped back into the input space (`F Wᵀ`).
    pub input_centroids: DMatrix<f64>,
    pub sizes: Vec<usize>,
    /// Number of clusters that ended up empty and were dropped.
    pub dropped: usize,
    pub state: GccState,
}

pub fn oversegment(y: &DMatrix<f64>, m: usize, cfg: &GccConfig) -> Result<Oversegmentation> {
    let n = y.nrows();
    if m >= n {
        return Err(SelectionError::Config(format!(
            "over-segmentation size {m} must be below the number of rows {n}"
        )));
    }
    let state = fit_gcc(
        y,
        &GccConfig {
            k: m,
            ..cfg.clone()
        },
    )?;
    let mut sizes = vec![0usize; m];
    for &a in &state.assignments {
        sizes[a] += 1;
    }
    let keep: Vec<usize> = (0..m).filter(|&j| sizes[j] > 0).collect();
    let dropped = m - keep.len();
    if dropped > 0 {
        tracing::warn!(dropped, "over-segmentation left empty clusters");
    }
    let centroids = state.centroids.select_rows(&keep);
    let input_centroids = &centroids * state.projection.transpose();
    Ok(Oversegmentation {
        centroids,
        input_centroids,
        sizes: keep.iter().map(|&j| sizes[j]).collect(),
        dropped,
        state,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KSuggestion {
    pub k: usize,
    /// Relative jump between the merge that would join the `k` clusters and
    /// the merge that formed them.
    pub score: f64,
    pub below: f64,
    pub above: f64,
    /// Set when every merge distance is zero and no cut is meaningful.
    pub degenerate: bool,
}

/// Ranks cuts `k` in `k_min..=k_max` by the relative gap
/// `(d_hi - d_lo) / d_lo` between consecutive sorted merge distances, best
/// first (ties to the smaller `k`). Every candidate is returned so that
/// several plausible cuts stay visible.
pub fn suggest_k(d: &Dendrogram, k_min: usize, k_max: usize) -> Vec<KSuggestion> {
    let mut dist = d.distances();
    dist.sort_by(f64::total_cmp);
    let m = d.n_leaves;
    let top = dist.last().copied().unwrap_or(0.0);
    if top <= 0.0 {
        return vec![KSuggestion {
            k: 1,
            score: 0.0,
            below: 0.0,
            above: 0.0,
            degenerate: true,
        }];
    }
    let eps = 1e-12 * top;
    let lo_k = k_min.max(2);
    let hi_k = k_max.min(m.saturating_sub(1));
    let mut out: Vec<KSuggestion> = (lo_k..=hi_k)
        .map(|k| {
            let above = dist[m - k];
            let below = dist[m - k - 1];
            KSuggestion {
                k,
                score: (above - below) / (below + eps),
                below,
                above,
                degenerate: false,
            }
        })
        .collect();
    out.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.k.cmp(&b.k)));
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PSweepPoint {
    pub p: usize,
    pub sqrt_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PSweepResult {
    pub p_min: usize,
    pub p_max: usize,
    pub points: Vec<PSweepPoint>,
    pub chosen: usize,
}

impl PSweepResult {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("p,sqrt_loss\n");
        for pt in &self.points {
            let _ = writeln!(s, "{},{}", pt.p, pt.sqrt_loss);
        }
        s
    }
}

/// Fits GCC on `T^p X` for every `p` in the range and picks the `p` with the
/// smallest square-rooted cluster loss (ties to the smaller `p`). Every fit
/// uses the same seed, so differences along the curve come from `p` alone.
pub fn sweep_p(
    prop: &Propagator,
    x: &FeatureMatrix,
    k: usize,
    p_range: RangeInclusive<usize>,
    cfg: &GccConfig,
) -> Result<PSweepResult> {
    let (p_min, p_max) = (*p_range.start(), *p_range.end());
    if p_min == 0 || p_min > p_max {
        return Err(SelectionError::Config(format!(
            "bad p range {p_min}..={p_max}"
        )));
    }
    let points: Vec<Result<PSweepPoint>> = p_range
        .into_par_iter()
        .map(|p| {
            let y = prop.power(x.values(), p)?;
            let st = fit_gcc(
                &y,
                &GccConfig {
                    k,
                    p,
                    ..cfg.clone()
                },
            )?;
            Ok(PSweepPoint {
                p,
                sqrt_loss: st.cluster_loss.sqrt(),
            })
        })
        .collect();
    let points = points.into_iter().collect::<Result<Vec<_>>>()?;
    let chosen = points
        .iter()
        .min_by(|a, b| a.sqrt_loss.total_cmp(&b.sqrt_loss).then(a.p.cmp(&b.p)))
        .map(|pt| pt.p)
        .expect("range is non-empty");
    Ok(PSweepResult {
        p_min,
        p_max,
        points,
        chosen,
    })
}
