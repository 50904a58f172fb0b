use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{kmeans, randomized_pca, GccConfig, GccError, Result};
use crate::linalg::{frob2, sq_dist};
use crate::rng::derive_seed;

/// Fitted factorization. `centroids` is `k x k` (rows live in the embedding
/// space `Y W`), `projection` is `d x k`.
#[derive(Debug, Clone, PartialEq)]
pub struct GccState {
    pub assignments: Vec<usize>,
    pub centroids: DMatrix<f64>,
    pub projection: DMatrix<f64>,
    pub loss_trace: Vec<f64>,
    /// `‖Y W - G F‖²` at the final state.
    pub cluster_loss: f64,
    /// Which restart produced this state.
    pub restart: usize,
}

impl GccState {
    pub fn k(&self) -> usize {
        self.centroids.nrows()
    }

    /// Dense binary `n x k` indicator matrix.
    pub fn assignment_matrix(&self) -> DMatrix<f64> {
        let mut g = DMatrix::zeros(self.assignments.len(), self.k());
        for (i, &a) in self.assignments.iter().enumerate() {
            g[(i, a)] = 1.0;
        }
        g
    }

    pub fn final_loss(&self) -> f64 {
        *self
            .loss_trace
            .last()
            .expect("trace holds the initial loss")
    }

    pub fn to_result(&self, p: usize, seed: u64) -> GccResult {
        GccResult {
            loss_trace: self.loss_trace.clone(),
            assignments: self.assignments.clone(),
            k: self.k(),
            p,
            seed,
        }
    }
}

/// Serialized summary of a fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GccResult {
    pub loss_trace: Vec<f64>,
    pub assignments: Vec<usize>,
    pub k: usize,
    pub p: usize,
    pub seed: u64,
}

/// `Yᵀ G`: per-cluster sums of the rows of `y`, as a `d x k` matrix.
fn cluster_sums(y: &DMatrix<f64>, assign: &[usize], k: usize) -> DMatrix<f64> {
    let mut s = DMatrix::zeros(y.ncols(), k);
    for (c, col) in y.column_iter().enumerate() {
        for (i, &a) in assign.iter().enumerate() {
            s[(c, a)] += col[i];
        }
    }
    s
}

pub fn embed(y: &DMatrix<f64>, w: &DMatrix<f64>) -> DMatrix<f64> {
    y * w
}

/// `‖Z - G F‖²` with `Z = Y W`.
pub fn cluster_loss(z: &DMatrix<f64>, assign: &[usize], f: &DMatrix<f64>) -> f64 {
    let zt = z.transpose();
    let ft = f.transpose();
    let k = zt.nrows();
    assign
        .iter()
        .enumerate()
        .map(|(i, &a)| {
            sq_dist(
                &zt.as_slice()[i * k..(i + 1) * k],
                &ft.as_slice()[a * k..(a + 1) * k],
            )
        })
        .sum()
}

/// `‖Y - Y W Wᵀ‖² + λ ‖Y W - G F‖²`. For orthonormal `W` and `λ = 1` this
/// equals [`reconstruction_loss`].
pub fn objective(
    y: &DMatrix<f64>,
    assign: &[usize],
    f: &DMatrix<f64>,
    w: &DMatrix<f64>,
    lambda: f64,
) -> f64 {
    let z = y * w;
    let resid = y - &z * w.transpose();
    frob2(&resid) + lambda * cluster_loss(&z, assign, f)
}

/// `‖Y - G F Wᵀ‖²`, computed directly.
pub fn reconstruction_loss(
    y: &DMatrix<f64>,
    assign: &[usize],
    f: &DMatrix<f64>,
    w: &DMatrix<f64>,
) -> f64 {
    let gf = DMatrix::from_fn(assign.len(), f.ncols(), |i, j| f[(assign[i], j)]);
    frob2(&(y - gf * w.transpose()))
}

/// Each centroid becomes the mean of its cluster's rows of `z`; empty
/// clusters keep their previous row.
pub fn update_f(z: &DMatrix<f64>, assign: &[usize], prev: &DMatrix<f64>) -> DMatrix<f64> {
    let k = prev.nrows();
    let mut sums = DMatrix::<f64>::zeros(k, z.ncols());
    let mut sizes = vec![0usize; k];
    for &a in assign {
        sizes[a] += 1;
    }
    for (c, col) in z.column_iter().enumerate() {
        for (i, &a) in assign.iter().enumerate() {
            sums[(a, c)] += col[i];
        }
    }
    let mut f = prev.clone();
    for (j, &size) in sizes.iter().enumerate() {
        if size > 0 {
            let inv = 1.0 / size as f64;
            f.set_row(j, &(sums.row(j) * inv));
        }
    }
    f
}

/// Nearest centroid for every row of `z`, ties to the smaller index.
pub fn update_g(z: &DMatrix<f64>, f: &DMatrix<f64>) -> Vec<usize> {
    let zt = z.transpose();
    let ft = f.transpose();
    let dim = zt.nrows();
    let k = f.nrows();
    (0..z.nrows())
        .into_par_iter()
        .map(|i| {
            let row = &zt.as_slice()[i * dim..(i + 1) * dim];
            let mut best = (0, f64::INFINITY);
            for j in 0..k {
                let d = sq_dist(row, &ft.as_slice()[j * dim..(j + 1) * dim]);
                if d < best.1 {
                    best = (j, d);
                }
            }
            best.0
        })
        .collect()
}

/// Projection update. At `λ = 1` this is the orthogonal Procrustes solution
/// `W = U Vᵀ` from the thin SVD of `Yᵀ G F`. Other weights use one
/// majorization step around `prev`, which still never increases the
/// objective.
pub fn update_w(
    y: &DMatrix<f64>,
    assign: &[usize],
    f: &DMatrix<f64>,
    prev: &DMatrix<f64>,
    lambda: f64,
) -> DMatrix<f64> {
    let mut m = cluster_sums(y, assign, f.nrows()) * f;
    if lambda != 1.0 {
        let ytyw = y.transpose() * (y * prev);
        m = m * lambda + ytyw * (1.0 - lambda);
        if lambda > 1.0 {
            // ‖Y‖_F² bounds the top eigenvalue of YᵀY
            m += prev * ((lambda - 1.0) * frob2(y));
        }
    }
    if m.iter().all(|&v| v == 0.0) {
        tracing::warn!("Yᵀ G F vanished; keeping the previous projection");
        return prev.clone();
    }
    let svd = m.svd(true, true);
    svd.u.expect("requested U") * svd.v_t.expect("requested V")
}

/// Moves the point farthest from its centroid into each empty cluster and
/// centres that cluster on it. Only donors with two or more members qualify.
fn repair_empty(z: &DMatrix<f64>, assign: &mut [usize], f: &mut DMatrix<f64>) {
    let k = f.nrows();
    let mut sizes = vec![0usize; k];
    for &a in assign.iter() {
        sizes[a] += 1;
    }
    if sizes.iter().all(|&s| s > 0) {
        return;
    }
    let zt = z.transpose();
    let dim = zt.nrows();
    let row = |i: usize| &zt.as_slice()[i * dim..(i + 1) * dim];
    for j in 0..k {
        if sizes[j] > 0 {
            continue;
        }
        let donor = (0..assign.len())
            .filter(|&i| sizes[assign[i]] > 1)
            .map(|i| (i, sq_dist(row(i), f.row(assign[i]).transpose().as_slice())))
            .filter(|&(_, d)| d > 0.0)
            .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)));
        if let Some((i, _)) = donor {
            sizes[assign[i]] -= 1;
            assign[i] = j;
            sizes[j] = 1;
            for (c, &v) in row(i).iter().enumerate() {
                f[(j, c)] = v;
            }
        }
    }
}

fn normalize_rows(y: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = y.clone();
    for mut r in out.row_iter_mut() {
        let norm = r.norm();
        if norm > 0.0 {
            r /= norm;
        }
    }
    out
}

fn fit_once(y: &DMatrix<f64>, cfg: &GccConfig, restart: usize) -> Result<GccState> {
    let seed = derive_seed(cfg.seed, restart as u64);
    let mut w = randomized_pca(y, cfg.k, derive_seed(seed, 0))?;
    let mut z = y * &w;
    let init = kmeans(&z, cfg.k, derive_seed(seed, 1), &cfg.kmeans)?;
    let mut g = init.assignments;
    let mut f = init.centroids;
    let mut trace = vec![objective(y, &g, &f, &w, cfg.lambda)];

    for it in 0..cfg.max_iter {
        f = update_f(&z, &g, &f);
        repair_empty(&z, &mut g, &mut f);
        g = update_g(&z, &f);
        w = update_w(y, &g, &f, &w, cfg.lambda);
        z = y * &w;
        let loss = objective(y, &g, &f, &w, cfg.lambda);
        if !loss.is_finite() {
            return Err(GccError::Diverged(it + 1));
        }
        let prev = *trace.last().unwrap();
        trace.push(loss);
        if (prev - loss).abs() <= cfg.tol * prev.abs() || loss == 0.0 {
            break;
        }
    }
    Ok(GccState {
        cluster_loss: cluster_loss(&z, &g, &f),
        assignments: g,
        centroids: f,
        projection: w,
        loss_trace: trace,
        restart,
    })
}

/// Fits `cfg.n_init` independent restarts in parallel and keeps the one with
/// the lowest final loss (ties to the earliest restart).
pub fn fit_gcc(y: &DMatrix<f64>, cfg: &GccConfig) -> Result<GccState> {
    let (n, d) = y.shape();
    cfg.validate(n, d)?;
    if y.iter().any(|v| !v.is_finite()) {
        return Err(GccError::NonFinite);
    }
    let normalized;
    let y = if cfg.normalize_rows {
        normalized = normalize_rows(y);
        &normalized
    } else {
        y
    };
    let runs: Vec<Result<GccState>> = (0..cfg.n_init)
        .into_par_iter()
        .map(|r| fit_once(y, cfg, r))
        .collect();
    let mut best: Option<GccState> = None;
    for run in runs {
        let run = run?;
        if best
            .as_ref()
            .is_none_or(|b| run.final_loss() < b.final_loss())
        {
            best = Some(run);
        }
    }
    Ok(best.expect("n_init >= 1"))
}
