//! Graph convolutional clustering: minimize `‖Y - G F Wᵀ‖²` over hard
//! assignments `G`, centroids `F` and a column-orthonormal projection `W`.

mod kmeans;
mod pca;
mod solver;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use kmeans::{kmeans, KMeansConfig, KMeansResult};
pub use pca::randomized_pca;
pub use solver::{
    cluster_loss, embed, fit_gcc, objective, reconstruction_loss, update_f, update_g, update_w,
    GccResult, GccState,
};

#[derive(Debug, Error)]
pub enum GccError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("cannot form {k} clusters from {n} rows")]
    ClusterCount { k: usize, n: usize },
    #[error("input matrix contains non-finite values")]
    NonFinite,
    #[error("solver diverged: loss became non-finite at iteration {0}")]
    Diverged(usize),
}

pub type Result<T> = std::result::Result<T, GccError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GccConfig {
    pub k: usize,
    pub p: usize,
    /// Weight of the cluster term. The solver is exact Procrustes at 1.
    pub lambda: f64,
    pub max_iter: usize,
    /// Stop once the relative loss change drops below this.
    pub tol: f64,
    pub seed: u64,
    pub n_init: usize,
    pub kmeans: KMeansConfig,
    /// Scale each row of `Y` to unit length before fitting.
    pub normalize_rows: bool,
}

impl Default for GccConfig {
    fn default() -> Self {
        Self {
            k: 2,
            p: 2,
            lambda: 1.0,
            max_iter: 30,
            tol: 1e-6,
            seed: 0,
            n_init: 10,
            kmeans: KMeansConfig::default(),
            normalize_rows: false,
        }
    }
}

impl GccConfig {
    pub fn validate(&self, n: usize, d: usize) -> Result<()> {
        if self.k < 2 || self.k > n {
            return Err(GccError::ClusterCount { k: self.k, n });
        }
        if self.k > d {
            return Err(GccError::Config(format!(
                "k = {} exceeds the feature dimension {d}; an orthonormal projection needs k <= d",
                self.k
            )));
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(GccError::Config("lambda must be positive".into()));
        }
        if self.max_iter == 0
            || self.n_init == 0
            || self.kmeans.n_init == 0
            || self.kmeans.max_iter == 0
        {
            return Err(GccError::Config(
                "iteration and restart counts must be >= 1".into(),
            ));
        }
        if self.tol.is_nan() || self.tol < 0.0 {
            return Err(GccError::Config("tol must be non-negative".into()));
        }
        Ok(())
    }
}
