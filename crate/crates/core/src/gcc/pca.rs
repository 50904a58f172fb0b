//! Randomized range finder for the initial projection.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{GccError, Result};
use crate::linalg::{complete_orthonormal, orthonormalize};

const OVERSAMPLING: usize = 10;
const POWER_ITERS: usize = 2;
/// Singular values below this fraction of the largest count as rank loss.
const RANK_TOL: f64 = 1e-10;

/// Approximates the top-`k` right singular subspace of `x` (uncentered) and
/// returns it as a `d x k` column-orthonormal matrix.
pub fn randomized_pca(x: &DMatrix<f64>, k: usize, seed: u64) -> Result<DMatrix<f64>> {
    let (n, d) = x.shape();
    if k == 0 || k > n.min(d) {
        return Err(GccError::Config(format!(
            "pca rank {k} must be in [1, min(n, d) = {}]",
            n.min(d)
        )));
    }
    let l = (k + OVERSAMPLING).min(n.min(d));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let omega = DMatrix::from_fn(d, l, |_, _| StandardNormal.sample(&mut rng));

    let xt = x.transpose();
    let mut q = orthonormalize(x * omega);
    for _ in 0..POWER_ITERS {
        let z = orthonormalize(&xt * &q);
        q = orthonormalize(x * z);
    }
    let b = q.transpose() * x; // l x d
    let svd = b.svd(false, true);
    let v_t = svd.v_t.expect("requested V");

    // singular values are not guaranteed sorted; order columns explicitly
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| {
        svd.singular_values[b]
            .total_cmp(&svd.singular_values[a])
            .then(a.cmp(&b))
    });
    let top = order.first().map_or(0.0, |&i| svd.singular_values[i]);

    let mut w = DMatrix::<f64>::zeros(d, k);
    let mut valid = 0;
    for &i in order.iter().take(k) {
        if svd.singular_values[i] <= RANK_TOL * top || top == 0.0 {
            break;
        }
        w.set_column(valid, &v_t.row(i).transpose());
        valid += 1;
    }
    if valid < k {
        tracing::warn!(
            rank = valid,
            k,
            "input rank below k; completing projection with random directions"
        );
        complete_orthonormal(&mut w, valid, &mut rng);
    }
    Ok(w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{frob2, orthonormality_error};

    fn random(n: usize, d: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(n, d, |_, _| StandardNormal.sample(&mut rng))
    }

    #[test]
    fn exact_rank_is_recovered() {
        let x = random(40, 3, 1) * random(3, 12, 2);
        let w = randomized_pca(&x, 3, 9).unwrap();
        let resid = &x - &x * &w * w.transpose();
        assert!(resid.norm() / x.norm() <= 1e-8);
        assert!(orthonormality_error(&w) <= 1e-10);
    }

    #[test]
    fn captured_variance_close_to_svd() {
        let x = random(50, 20, 5);
        let w = randomized_pca(&x, 5, 3).unwrap();
        let captured = frob2(&(&x * &w));
        let mut sv: Vec<f64> = x
            .clone()
            .svd(false, false)
            .singular_values
            .iter()
            .copied()
            .collect();
        sv.sort_by(|a, b| b.total_cmp(a));
        let best: f64 = sv[..5].iter().map(|s| s * s).sum();
        assert!(captured >= 0.99 * best, "{captured} vs {best}");
    }

    #[test]
    fn rank_deficient_input_is_completed() {
        let mut x = DMatrix::<f64>::zeros(10, 6);
        for i in 0..10 {
            x[(i, 0)] = i as f64;
        }
        let w = randomized_pca(&x, 4, 0).unwrap();
        assert!(orthonormality_error(&w) <= 1e-10);
        assert!((w[(0, 0)].abs() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn k_too_large() {
        assert!(randomized_pca(&random(4, 3, 0), 4, 0).is_err());
    }
}
