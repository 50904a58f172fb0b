//! Small dense helpers shared by the solvers.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

#[inline]
pub fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Squared Frobenius norm.
pub fn frob2(m: &DMatrix<f64>) -> f64 {
    m.iter().map(|x| x * x).sum()
}

/// `max |WᵀW - I|`.
pub fn orthonormality_error(w: &DMatrix<f64>) -> f64 {
    let g = w.transpose() * w;
    (g - DMatrix::<f64>::identity(w.ncols(), w.ncols())).amax()
}

/// Replaces columns `valid..` of `w` with random unit vectors orthogonal to
/// every earlier column (two Gram-Schmidt passes).
pub fn complete_orthonormal<R: Rng>(w: &mut DMatrix<f64>, valid: usize, rng: &mut R) {
    let d = w.nrows();
    let mut j = valid;
    while j < w.ncols() {
        let mut v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        for _ in 0..2 {
            for c in 0..j {
                let col = w.column(c);
                let dot: f64 = col.iter().zip(&v).map(|(a, b)| a * b).sum();
                for (vi, ci) in v.iter_mut().zip(col.iter()) {
                    *vi -= dot * ci;
                }
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm < 1e-8 {
            continue;
        }
        for (r, vi) in v.iter().enumerate() {
            w[(r, j)] = vi / norm;
        }
        j += 1;
    }
}

/// Orthonormal basis of the column space via thin QR.
pub fn orthonormalize(m: DMatrix<f64>) -> DMatrix<f64> {
    m.qr().q()
}
