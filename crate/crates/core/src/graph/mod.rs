//! Document graphs: the named-entity graph and the KNN baseline.

mod knn;
mod ner;

use std::collections::VecDeque;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use knn::build_knn_graph;
pub use ner::{build_ner_graph, find_matches, EntityMatch, GraphConfig, MatchReport};

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("cosine similarity of a zero vector")]
    ZeroVector,
    #[error("vector length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("k_nn = {k} out of range [1, {max}]")]
    KnnRange { k: usize, max: usize },
    #[error("invalid graph config: {0}")]
    Config(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("graph file line {line}: {message}")]
    Parse { line: usize, message: String },
}

pub type Result<T> = std::result::Result<T, GraphError>;

/// Cosine similarity of two equal-length vectors, accumulated in f64 and
/// clamped to [-1, 1].
pub fn cosine_sim<T: Copy + Into<f64>>(u: &[T], v: &[T]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(GraphError::LengthMismatch(u.len(), v.len()));
    }
    let (mut dot, mut nu, mut nv) = (0.0f64, 0.0f64, 0.0f64);
    let mut identical = true;
    for (&a, &b) in u.iter().zip(v) {
        let (a, b): (f64, f64) = (a.into(), b.into());
        identical &= a == b;
        dot += a * b;
        nu += a * a;
        nv += b * b;
    }
    if nu == 0.0 || nv == 0.0 {
        return Err(GraphError::ZeroVector);
    }
    if identical {
        return Ok(1.0);
    }
    Ok((dot / (nu.sqrt() * nv.sqrt())).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GraphKind {
    Ner,
    Knn,
}

impl GraphKind {
    fn as_str(self) -> &'static str {
        match self {
            GraphKind::Ner => "ner",
            GraphKind::Knn => "knn",
        }
    }
}

/// Undirected weighted graph over `n` documents.
///
/// Each edge is stored once as `(i, j, w)` with `i < j`, sorted; the
/// adjacency is symmetric by construction and carries no self-loops.
#[derive(Debug, Clone, PartialEq)]
pub struct DocGraph {
    n: usize,
    kind: GraphKind,
    edges: Vec<(usize, usize, f64)>,
}

impl DocGraph {
    /// Builds a graph from an arbitrary edge list. Orientation is
    /// normalized, self-loops dropped, and for repeated pairs the last
    /// weight wins.
    pub fn from_edges(
        n: usize,
        kind: GraphKind,
        edges: impl IntoIterator<Item = (usize, usize, f64)>,
    ) -> Self {
        let mut es: Vec<(usize, usize, f64)> = edges
            .into_iter()
            .filter(|&(i, j, _)| i != j)
            .map(|(i, j, w)| {
                assert!(i < n && j < n, "edge ({i}, {j}) out of range for n = {n}");
                (i.min(j), i.max(j), w)
            })
            .collect();
        es.sort_by_key(|a| (a.0, a.1));
        let mut dedup: Vec<(usize, usize, f64)> = Vec::with_capacity(es.len());
        for e in es {
            match dedup.last_mut() {
                Some(last) if (last.0, last.1) == (e.0, e.1) => *last = e,
                _ => dedup.push(e),
            }
        }
        Self {
            n,
            kind,
            edges: dedup,
        }
    }

    pub fn empty(n: usize, kind: GraphKind) -> Self {
        Self {
            n,
            kind,
            edges: Vec::new(),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn kind(&self) -> GraphKind {
        self.kind
    }

    pub fn edges(&self) -> &[(usize, usize, f64)] {
        &self.edges
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    /// Symmetric weight lookup; 0 when absent.
    pub fn weight(&self, i: usize, j: usize) -> f64 {
        let key = (i.min(j), i.max(j));
        self.edges
            .binary_search_by(|e| (e.0, e.1).cmp(&key))
            .map_or(0.0, |k| self.edges[k].2)
    }

    /// Adjacency lists with both orientations, neighbours in ascending order.
    pub fn neighbors(&self) -> Vec<Vec<(usize, f64)>> {
        let mut adj = vec![Vec::new(); self.n];
        for &(i, j, w) in &self.edges {
            adj[i].push((j, w));
            adj[j].push((i, w));
        }
        for list in &mut adj {
            list.sort_by_key(|&(j, _)| j);
        }
        adj
    }

    /// Renders the text edge-list format: header `n kind`, then one
    /// `i j weight` line per edge with the weight to 9 significant digits.
    pub fn to_text(&self) -> String {
        let mut out = format!("{} {}\n", self.n, self.kind.as_str());
        for &(i, j, w) in &self.edges {
            writeln!(out, "{i} {j} {w:.8e}").unwrap();
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty());
        let parse_err = |line: usize, message: String| GraphError::Parse {
            line: line + 1,
            message,
        };
        let (hl, header) = lines
            .next()
            .ok_or_else(|| parse_err(0, "missing header".into()))?;
        let mut parts = header.split_whitespace();
        let n: usize = parts
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| parse_err(hl, "bad node count".into()))?;
        let kind = match parts.next() {
            Some("ner") => GraphKind::Ner,
            Some("knn") => GraphKind::Knn,
            other => return Err(parse_err(hl, format!("bad graph kind {other:?}"))),
        };
        let mut edges = Vec::new();
        for (ln, line) in lines {
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 3 {
                return Err(parse_err(ln, "expected `i j weight`".into()));
            }
            let i: usize = f[0]
                .parse()
                .map_err(|_| parse_err(ln, "bad node index".into()))?;
            let j: usize = f[1]
                .parse()
                .map_err(|_| parse_err(ln, "bad node index".into()))?;
            let w: f64 = f[2]
                .parse()
                .map_err(|_| parse_err(ln, "bad weight".into()))?;
            if i >= n || j >= n || i == j {
                return Err(parse_err(ln, format!("invalid edge ({i}, {j})")));
            }
            if !(w.is_finite() && w > 0.0) {
                return Err(parse_err(ln, format!("weight {w} not in (0, inf)")));
            }
            edges.push((i, j, w));
        }
        Ok(Self::from_edges(n, kind, edges))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()).map_err(|source| GraphError::Io {
            path: path.to_owned(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|source| GraphError::Io {
            path: path.to_owned(),
            source,
        })?;
        Self::from_text(&text)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphStats {
    pub nodes: usize,
    pub edges: usize,
    pub isolates: usize,
    pub mean_degree: f64,
    pub components: usize,
}

pub fn graph_stats(g: &DocGraph) -> GraphStats {
    let adj = g.neighbors();
    let isolates = adj.iter().filter(|a| a.is_empty()).count();
    let mut seen = vec![false; g.n()];
    let mut components = 0;
    let mut queue = VecDeque::new();
    for start in 0..g.n() {
        if seen[start] {
            continue;
        }
        components += 1;
        seen[start] = true;
        queue.push_back(start);
        while let Some(u) = queue.pop_front() {
            for &(v, _) in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    queue.push_back(v);
                }
            }
        }
    }
    GraphStats {
        nodes: g.n(),
        edges: g.num_edges(),
        isolates,
        mean_degree: if g.n() == 0 {
            0.0
        } else {
            2.0 * g.num_edges() as f64 / g.n() as f64
        },
        components,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn cosine_examples() {
        assert_eq!(cosine_sim(&[0.3f32, -2.0], &[0.3f32, -2.0]).unwrap(), 1.0);
        assert_eq!(cosine_sim(&[1.0, 0.0], &[0.0, 5.0]).unwrap(), 0.0);
        // 32 / (sqrt(14) * sqrt(77))
        let c = cosine_sim(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]).unwrap();
        assert!((c - 0.974_631_846_197_076_2).abs() < 1e-15);
        assert!(matches!(
            cosine_sim(&[0.0, 0.0], &[1.0, 0.0]),
            Err(GraphError::ZeroVector)
        ));
    }

    #[test]
    fn stats_of_empty_and_complete() {
        let e = graph_stats(&DocGraph::empty(5, GraphKind::Ner));
        assert_eq!((e.isolates, e.edges, e.components), (5, 0, 5));
        let k4 = DocGraph::from_edges(
            4,
            GraphKind::Knn,
            (0..4).flat_map(|i| (0..4).map(move |j| (i, j, 1.0))),
        );
        let s = graph_stats(&k4);
        assert_eq!((s.edges, s.isolates, s.components), (6, 0, 1));
        assert_eq!(s.mean_degree, 3.0);
    }

    #[test]
    fn weight_lookup_is_symmetric() {
        let g = DocGraph::from_edges(3, GraphKind::Ner, [(2, 0, 0.5), (1, 2, 0.25)]);
        assert_eq!(g.weight(0, 2), 0.5);
        assert_eq!(g.weight(2, 0), 0.5);
        assert_eq!(g.weight(0, 1), 0.0);
    }

    #[test]
    fn text_format_shape() {
        let g = DocGraph::from_edges(3, GraphKind::Ner, [(0, 1, 0.95)]);
        assert_eq!(g.to_text(), "3 ner\n0 1 9.50000000e-1\n");
    }

    #[test]
    fn parse_errors() {
        assert!(DocGraph::from_text("").is_err());
        assert!(DocGraph::from_text("3 foo\n").is_err());
        assert!(matches!(
            DocGraph::from_text("2 ner\n0 5 1.0\n"),
            Err(GraphError::Parse { line: 2, .. })
        ));
        assert!(DocGraph::from_text("2 ner\n0 1 -1.0\n").is_err());
    }

    fn union_find_components(n: usize, edges: &[(usize, usize, f64)]) -> usize {
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(p: &mut [usize], x: usize) -> usize {
            let mut r = x;
            while p[r] != r {
                r = p[r];
            }
            let mut c = x;
            while p[c] != r {
                let next = p[c];
                p[c] = r;
                c = next;
            }
            r
        }
        for &(a, b, _) in edges {
            let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
            if ra != rb {
                parent[ra] = rb;
            }
        }
        (0..n).filter(|&x| find(&mut parent, x) == x).count()
    }

    proptest! {
        #[test]
        fn components_match_union_find(n in 1usize..30, raw in proptest::collection::vec((0usize..30, 0usize..30, 0.01f64..1.0), 0..60)) {
            let edges: Vec<_> = raw.into_iter().map(|(a, b, w)| (a % n, b % n, w)).collect();
            let g = DocGraph::from_edges(n, GraphKind::Ner, edges);
            prop_assert_eq!(graph_stats(&g).components, union_find_components(n, g.edges()));
        }

        #[test]
        fn text_round_trip_is_stable(n in 2usize..20, raw in proptest::collection::vec((0usize..20, 0usize..20, 1e-6f64..1.0), 0..40)) {
            let edges: Vec<_> = raw.into_iter().map(|(a, b, w)| (a % n, b % n, w)).collect();
            let g = DocGraph::from_edges(n, GraphKind::Knn, edges);
            let once = DocGraph::from_text(&g.to_text()).unwrap();
            prop_assert_eq!(once.to_text(), g.to_text());
            let twice = DocGraph::from_text(&once.to_text()).unwrap();
            prop_assert_eq!(&twice, &once);
            for (a, b) in once.edges().iter().zip(g.edges()) {
                prop_assert!(((a.2 - b.2) / b.2).abs() < 1e-8);
            }
        }
    }
}
