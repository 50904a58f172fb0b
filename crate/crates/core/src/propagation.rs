//! Normalized simple graph convolution `Y^p = T^p X`.
//!
//! `T = D_T^{-1} (I + S)` with `S = D^{-1/2} (A + I) D^{-1/2}`, where `D` and
//! `D_T` are the degree matrices of `A + I` and `I + S`. `T` is row
//! stochastic with a positive diagonal, so an isolated node keeps its own
//! features.

use nalgebra::DMatrix;
use rayon::prelude::*;
use thiserror::Error;

use crate::features::{FeatureKind, FeatureMatrix};
use crate::graph::DocGraph;

#[derive(Debug, Error)]
pub enum PropagationError {
    #[error("feature rows ({rows}) do not match graph nodes ({nodes})")]
    DimensionMismatch { rows: usize, nodes: usize },
}

/// Square sparse matrix in compressed row storage.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.indptr[i]..self.indptr[i + 1];
        self.indices[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                m[(i, j)] += v;
            }
        }
        m
    }

    /// `self * x` for a dense `x`, one column at a time. Each output entry
    /// sums its row in a fixed order, so results do not depend on threading.
    pub fn mul_dense(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        assert_eq!(x.nrows(), self.n);
        let mut out = DMatrix::<f64>::zeros(self.n, x.ncols());
        out.as_mut_slice()
            .par_chunks_mut(self.n.max(1))
            .zip(x.as_slice().par_chunks(self.n.max(1)))
            .for_each(|(y, xc)| {
                for (i, yi) in y.iter_mut().enumerate() {
                    *yi = self.row(i).map(|(j, v)| v * xc[j]).sum();
                }
            });
        out
    }
}

/// Row-stochastic propagation operator built once per graph.
#[derive(Debug, Clone, PartialEq)]
pub struct Propagator {
    t: CsrMatrix,
}

pub fn build_propagator(g: &DocGraph) -> Propagator {
    let n = g.n();
    let adj = g.neighbors();
    // degree of A + I
    let deg: Vec<f64> = adj
        .iter()
        .map(|nb| 1.0 + nb.iter().map(|&(_, w)| w).sum::<f64>())
        .collect();
    let inv_sqrt: Vec<f64> = deg.iter().map(|d| 1.0 / d.sqrt()).collect();

    let mut indptr = Vec::with_capacity(n + 1);
    let mut indices = Vec::with_capacity(n + 2 * g.num_edges());
    let mut values = Vec::with_capacity(n + 2 * g.num_edges());
    indptr.push(0);
    for (i, nb) in adj.iter().enumerate() {
        // row i of I + S, columns ascending with the diagonal in place
        let mut row: Vec<(usize, f64)> = Vec::with_capacity(nb.len() + 1);
        let diag = 1.0 + inv_sqrt[i] * inv_sqrt[i];
        let mut placed = false;
        for &(j, w) in nb {
            if !placed && j > i {
                row.push((i, diag));
                placed = true;
            }
            row.push((j, w * inv_sqrt[i] * inv_sqrt[j]));
        }
        if !placed {
            row.push((i, diag));
        }
        let total: f64 = row.iter().map(|&(_, v)| v).sum();
        for (j, v) in row {
            indices.push(j);
            values.push(v / total);
        }
        indptr.push(indices.len());
    }
    Propagator {
        t: CsrMatrix {
            n,
            indptr,
            indices,
            values,
        },
    }
}

impl Propagator {
    pub fn n(&self) -> usize {
        self.t.n
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.t
    }

    /// One application `T * x`.
    pub fn step(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>, PropagationError> {
        if x.nrows() != self.t.n {
            return Err(PropagationError::DimensionMismatch {
                rows: x.nrows(),
                nodes: self.t.n,
            });
        }
        Ok(self.t.mul_dense(x))
    }

    /// `T^p x` by `p` successive sparse-dense products.
    pub fn power(&self, x: &DMatrix<f64>, p: usize) -> Result<DMatrix<f64>, PropagationError> {
        if x.nrows() != self.t.n {
            return Err(PropagationError::DimensionMismatch {
                rows: x.nrows(),
                nodes: self.t.n,
            });
        }
        let mut y = x.clone();
        for _ in 0..p {
            y = self.t.mul_dense(&y);
        }
        Ok(y)
    }
}

pub fn propagate(
    prop: &Propagator,
    x: &FeatureMatrix,
    p: usize,
) -> Result<FeatureMatrix, PropagationError> {
    if p == 0 {
        return Ok(x.clone());
    }
    let y = prop.power(x.values(), p)?;
    Ok(x.with_values(FeatureKind::Propagated, y)
        .expect("propagating finite rows stays finite"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::GraphKind;
    use proptest::prelude::*;

    fn features(rows: usize, cols: usize, f: impl Fn(usize, usize) -> f64) -> FeatureMatrix {
        FeatureMatrix::new(
            FeatureKind::Llm,
            (0..rows).map(|i| format!("d{i}")).collect(),
            DMatrix::from_fn(rows, cols, f),
        )
        .unwrap()
    }

    /// T built densely, straight from the definition.
    fn dense_t(g: &DocGraph) -> DMatrix<f64> {
        let n = g.n();
        let a = DMatrix::from_fn(n, n, |i, j| if i == j { 0.0 } else { g.weight(i, j) });
        let at = &a + DMatrix::<f64>::identity(n, n);
        let d_inv_sqrt = DMatrix::from_diagonal(&at.column_sum().map(|d| 1.0 / d.sqrt()));
        let s = &d_inv_sqrt * &at * &d_inv_sqrt;
        let m = DMatrix::<f64>::identity(n, n) + s;
        let dt_inv = DMatrix::from_diagonal(&m.column_sum().map(|d| 1.0 / d));
        dt_inv * m
    }

    #[test]
    fn edgeless_graph_is_identity() {
        let p = build_propagator(&DocGraph::empty(4, GraphKind::Ner));
        assert_eq!(p.matrix().to_dense(), DMatrix::<f64>::identity(4, 4));
        let x = features(4, 3, |i, j| (i * 3 + j) as f64);
        assert_eq!(propagate(&p, &x, 7).unwrap().values(), x.values());
    }

    #[test]
    fn single_unit_edge() {
        // A+I = [[1,1],[1,1]], D = 2I, S = (A+I)/2, I+S = [[1.5,.5],[.5,1.5]], row sums 2
        let g = DocGraph::from_edges(2, GraphKind::Ner, [(0, 1, 1.0)]);
        let t = build_propagator(&g).matrix().to_dense();
        assert!((t - DMatrix::from_row_slice(2, 2, &[0.75, 0.25, 0.25, 0.75])).amax() <= 1e-15);
    }

    #[test]
    fn zero_power_is_identity() {
        let g = DocGraph::from_edges(3, GraphKind::Ner, [(0, 1, 0.5), (1, 2, 1.0)]);
        let x = features(3, 2, |i, j| (i as f64).sin() + j as f64);
        assert_eq!(propagate(&build_propagator(&g), &x, 0).unwrap(), x);
    }

    #[test]
    fn path_graph_matches_dense_square() {
        let g = DocGraph::from_edges(3, GraphKind::Ner, [(0, 1, 1.0), (1, 2, 1.0)]);
        let x = features(3, 1, |_, _| 1.0);
        let y = propagate(&build_propagator(&g), &x, 2).unwrap();
        let t = dense_t(&g);
        let expect = &t * &t * x.values();
        assert!((y.values() - expect).amax() <= 1e-10);
        let xr = features(3, 2, |i, j| (i * 7 + j * 3) as f64 - 4.0);
        let yr = propagate(&build_propagator(&g), &xr, 2).unwrap();
        assert!((yr.values() - &t * &t * xr.values()).amax() <= 1e-10);
    }

    #[test]
    fn dimension_mismatch() {
        let p = build_propagator(&DocGraph::empty(3, GraphKind::Ner));
        assert!(propagate(&p, &features(2, 1, |_, _| 0.0), 1).is_err());
    }

    fn random_graph() -> impl Strategy<Value = DocGraph> {
        (2usize..25).prop_flat_map(|n| {
            proptest::collection::vec((0..n, 0..n, 0.01f64..1.0), 0..3 * n)
                .prop_map(move |e| DocGraph::from_edges(n, GraphKind::Ner, e))
        })
    }

    fn connected(g: &DocGraph) -> bool {
        crate::graph::graph_stats(g).components == 1
    }

    proptest! {
        #[test]
        fn rows_are_stochastic(g in random_graph()) {
            let t = build_propagator(&g).matrix().to_dense();
            for i in 0..g.n() {
                prop_assert!((t.row(i).sum() - 1.0).abs() <= 1e-9);
                prop_assert!(t[(i, i)] > 0.0);
                prop_assert!(t.row(i).iter().all(|&v| v >= 0.0));
            }
            prop_assert!((t - dense_t(&g)).amax() <= 1e-12);
        }

        #[test]
        fn constant_column_is_fixed(g in random_graph(), c in -5.0f64..5.0, p in 0usize..6) {
            let x = features(g.n(), 1, |_, _| c);
            let y = propagate(&build_propagator(&g), &x, p).unwrap();
            for v in y.values().iter() {
                prop_assert!((v - c).abs() <= 1e-12 * c.abs().max(1.0));
            }
        }

        #[test]
        fn variance_does_not_grow(g in random_graph().prop_filter("connected", connected), seed in any::<u64>()) {
            let x = features(g.n(), 3, |i, j| ((seed.wrapping_add((i * 31 + j * 7) as u64) % 1000) as f64) / 100.0);
            let prop = build_propagator(&g);
            let var = |m: &DMatrix<f64>, j: usize| {
                let c = m.column(j);
                let mean = c.mean();
                c.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / c.len() as f64
            };
            let mut y = x.values().clone();
            for _ in 0..6 {
                let next = prop.step(&y).unwrap();
                for j in 0..3 {
                    prop_assert!(var(&next, j) <= var(&y, j) + 1e-10);
                }
                y = next;
            }
        }

        #[test]
        fn spectrum_within_unit_disk(g in random_graph()) {
            // T = D_T^{-1} M with M symmetric, so T is similar to the
            // symmetric D_T^{-1/2} M D_T^{-1/2} and its spectrum is real
            let n = g.n();
            let a = DMatrix::from_fn(n, n, |i, j| if i == j { 0.0 } else { g.weight(i, j) });
            let at = &a + DMatrix::<f64>::identity(n, n);
            let dis = DMatrix::from_diagonal(&at.column_sum().map(|v| 1.0 / v.sqrt()));
            let m = DMatrix::<f64>::identity(n, n) + &dis * &at * &dis;
            let dt = DMatrix::from_diagonal(&m.column_sum().map(|v| 1.0 / v.sqrt()));
            let sym = &dt * m * &dt;
            for ev in sym.symmetric_eigenvalues().iter() {
                prop_assert!(ev.abs() <= 1.0 + 1e-8);
            }
        }
    }
}
