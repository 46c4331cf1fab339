//! Attributed undirected graphs and their Laplacians.
//!
//! A [`Graph`] is immutable once built. Edges are stored once in canonical
//! `(i, j)` with `i < j` order (keeping the caller's edge order, so edge
//! feature row `k` always belongs to `edges()[k]`), and the adjacency is a
//! CSR structure in which every undirected edge appears in both directions.

use nalgebra::DMatrix;
use std::collections::HashSet;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Graph {
    edges: Vec<(usize, usize)>,
    offsets: Vec<usize>,
    neighbors: Vec<usize>,
    /// Edge id of each CSR slot, parallel to `neighbors`.
    slot_edge: Vec<usize>,
    node_features: DMatrix<f64>,
    edge_features: DMatrix<f64>,
    label: Option<usize>,
}

impl Graph {
    /// Builds a validated graph. The node count is the row count of
    /// `node_features`; missing edge features become an `m × 0` matrix.
    pub fn new(
        edges: &[(usize, usize)],
        node_features: DMatrix<f64>,
        edge_features: Option<DMatrix<f64>>,
        label: Option<usize>,
    ) -> Result<Self> {
        let n = node_features.nrows();
        let m = edges.len();
        if node_features.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("node_features"));
        }
        let edge_features = match edge_features {
            Some(ef) => {
                if ef.nrows() != m {
                    return Err(Error::RowMismatch {
                        what: "edge_features",
                        expected: m,
                        got: ef.nrows(),
                    });
                }
                if ef.iter().any(|x| !x.is_finite()) {
                    return Err(Error::NonFinite("edge_features"));
                }
                ef
            }
            None => DMatrix::zeros(m, 0),
        };

        let mut seen = HashSet::with_capacity(m);
        let mut canonical = Vec::with_capacity(m);
        for &(i, j) in edges {
            if i >= n || j >= n {
                return Err(Error::NodeOutOfRange(i, j, n));
            }
            if i == j {
                return Err(Error::SelfLoop(i));
            }
            let e = (i.min(j), i.max(j));
            if !seen.insert(e) {
                return Err(Error::DuplicateEdge(e.0, e.1));
            }
            canonical.push(e);
        }

        let mut degree = vec![0usize; n];
        for &(i, j) in &canonical {
            degree[i] += 1;
            degree[j] += 1;
        }
        let mut offsets = Vec::with_capacity(n + 1);
        offsets.push(0);
        for d in &degree {
            offsets.push(offsets.last().unwrap() + d);
        }
        let mut fill = offsets[..n].to_vec();
        let mut neighbors = vec![0; 2 * m];
        let mut slot_edge = vec![0; 2 * m];
        for (k, &(i, j)) in canonical.iter().enumerate() {
            neighbors[fill[i]] = j;
            slot_edge[fill[i]] = k;
            fill[i] += 1;
            neighbors[fill[j]] = i;
            slot_edge[fill[j]] = k;
            fill[j] += 1;
        }
        // Sort each neighbor list so traversal order is independent of edge order.
        for v in 0..n {
            let range = offsets[v]..offsets[v + 1];
            let mut pairs: Vec<(usize, usize)> = neighbors[range.clone()]
                .iter()
                .copied()
                .zip(slot_edge[range.clone()].iter().copied())
                .collect();
            pairs.sort_unstable();
            for (slot, (u, e)) in range.zip(pairs) {
                neighbors[slot] = u;
                slot_edge[slot] = e;
            }
        }

        Ok(Graph {
            edges: canonical,
            offsets,
            neighbors,
            slot_edge,
            node_features,
            edge_features,
            label,
        })
    }

    /// Disjoint union with node and edge ids offset in order. Feature widths
    /// must agree; the result has no label.
    pub fn disjoint_union(parts: &[&Graph]) -> Result<Graph> {
        let (f_v, f_e) = match parts.first() {
            Some(g) => (g.node_feature_dim(), g.edge_feature_dim()),
            None => (0, 0),
        };
        if let Some(g) = parts
            .iter()
            .find(|g| g.node_feature_dim() != f_v || g.edge_feature_dim() != f_e)
        {
            return Err(Error::dim(
                "disjoint union",
                format!(
                    "feature widths ({}, {}) differ from ({f_v}, {f_e})",
                    g.node_feature_dim(),
                    g.edge_feature_dim()
                ),
            ));
        }
        let n: usize = parts.iter().map(|g| g.n()).sum();
        let m: usize = parts.iter().map(|g| g.m()).sum();
        let mut edges = Vec::with_capacity(m);
        let mut offsets = Vec::with_capacity(n + 1);
        offsets.push(0);
        let mut neighbors = Vec::with_capacity(2 * m);
        let mut slot_edge = Vec::with_capacity(2 * m);
        let mut node_features = DMatrix::zeros(n, f_v);
        let mut edge_features = DMatrix::zeros(m, f_e);
        let (mut nv, mut ne) = (0, 0);
        for g in parts {
            edges.extend(g.edges.iter().map(|&(i, j)| (i + nv, j + nv)));
            let base = neighbors.len();
            offsets.extend(g.offsets[1..].iter().map(|&o| o + base));
            neighbors.extend(g.neighbors.iter().map(|&u| u + nv));
            slot_edge.extend(g.slot_edge.iter().map(|&e| e + ne));
            node_features
                .view_mut((nv, 0), (g.n(), f_v))
                .copy_from(&g.node_features);
            edge_features
                .view_mut((ne, 0), (g.m(), f_e))
                .copy_from(&g.edge_features);
            nv += g.n();
            ne += g.m();
        }
        Ok(Graph {
            edges,
            offsets,
            neighbors,
            slot_edge,
            node_features,
            edge_features,
            label: None,
        })
    }

    /// Graph with a single constant feature `1.0` per node and no edge features.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        Graph::new(edges, DMatrix::from_element(n, 1, 1.0), None, None)
    }

    pub fn n(&self) -> usize {
        self.node_features.nrows()
    }

    pub fn m(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn degree(&self, v: usize) -> usize {
        self.offsets[v + 1] - self.offsets[v]
    }

    pub fn degrees(&self) -> Vec<usize> {
        (0..self.n()).map(|v| self.degree(v)).collect()
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.neighbors[self.offsets[v]..self.offsets[v + 1]]
    }

    /// Edge ids parallel to [`Graph::neighbors`].
    pub fn incident_edges(&self, v: usize) -> &[usize] {
        &self.slot_edge[self.offsets[v]..self.offsets[v + 1]]
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        i < self.n() && self.neighbors(i).binary_search(&j).is_ok()
    }

    pub fn node_features(&self) -> &DMatrix<f64> {
        &self.node_features
    }

    pub fn edge_features(&self) -> &DMatrix<f64> {
        &self.edge_features
    }

    pub fn node_feature_dim(&self) -> usize {
        self.node_features.ncols()
    }

    pub fn edge_feature_dim(&self) -> usize {
        self.edge_features.ncols()
    }

    pub fn label(&self) -> Option<usize> {
        self.label
    }

    /// Average degree `2m / n` (zero for an empty graph).
    pub fn mean_degree(&self) -> f64 {
        if self.n() == 0 {
            0.0
        } else {
            2.0 * self.m() as f64 / self.n() as f64
        }
    }

    /// Same structure, new features. Row counts are re-validated.
    pub fn with_features(
        &self,
        node_features: DMatrix<f64>,
        edge_features: Option<DMatrix<f64>>,
    ) -> Result<Self> {
        if node_features.nrows() != self.n() {
            return Err(Error::RowMismatch {
                what: "node_features",
                expected: self.n(),
                got: node_features.nrows(),
            });
        }
        Graph::new(&self.edges, node_features, edge_features, self.label)
    }

    pub fn with_label(mut self, label: Option<usize>) -> Self {
        self.label = label;
        self
    }

    /// Connected-component index per node (components numbered by their
    /// smallest node) and the component count.
    pub fn connected_components(&self) -> (Vec<usize>, usize) {
        let n = self.n();
        let mut comp = vec![usize::MAX; n];
        let mut count = 0;
        let mut stack = Vec::new();
        for s in 0..n {
            if comp[s] != usize::MAX {
                continue;
            }
            comp[s] = count;
            stack.push(s);
            while let Some(v) = stack.pop() {
                for &u in self.neighbors(v) {
                    if comp[u] == usize::MAX {
                        comp[u] = count;
                        stack.push(u);
                    }
                }
            }
            count += 1;
        }
        (comp, count)
    }

    /// Dense unnormalized Laplacian `D - A`.
    pub fn laplacian(&self) -> SymmetricMatrix {
        let n = self.n();
        let mut l = DMatrix::zeros(n, n);
        for &(i, j) in &self.edges {
            l[(i, j)] = -1.0;
            l[(j, i)] = -1.0;
        }
        for v in 0..n {
            l[(v, v)] = self.degree(v) as f64;
        }
        SymmetricMatrix(l)
    }

    /// Line graph on undirected edges: node `k` is `edges()[k]`, two nodes are
    /// adjacent iff the edges share an endpoint. Node features of the result
    /// are this graph's edge features (possibly zero-width).
    pub fn line_graph(&self) -> Result<Graph> {
        if self.m() == 0 {
            return Err(Error::InvalidArgument(
                "line graph requires at least one edge".into(),
            ));
        }
        let mut line_edges = Vec::new();
        for v in 0..self.n() {
            let inc = self.incident_edges(v);
            for a in 0..inc.len() {
                for b in a + 1..inc.len() {
                    line_edges.push((inc[a], inc[b]));
                }
            }
        }
        Graph::new(&line_edges, self.edge_features.clone(), None, None)
    }
}

/// Dense symmetric real matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct SymmetricMatrix(DMatrix<f64>);

impl SymmetricMatrix {
    /// Validates squareness, finiteness, and symmetry to a relative `1e-12`.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::NotSymmetric);
        }
        if m.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("symmetric matrix"));
        }
        let scale = m.amax().max(1.0);
        let n = m.nrows();
        for i in 0..n {
            for j in i + 1..n {
                if (m[(i, j)] - m[(j, i)]).abs() > 1e-12 * scale {
                    return Err(Error::NotSymmetric);
                }
            }
        }
        Ok(SymmetricMatrix(m))
    }

    pub fn order(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn disjoint_union_matches_direct_build() {
        let a = Graph::new(
            &[(1, 0)],
            DMatrix::from_row_slice(2, 1, &[1.0, 2.0]),
            Some(DMatrix::from_element(1, 1, 5.0)),
            Some(0),
        )
        .unwrap();
        let b = Graph::new(
            &[(0, 2), (1, 2)],
            DMatrix::from_row_slice(3, 1, &[3.0, 4.0, 6.0]),
            Some(DMatrix::from_row_slice(2, 1, &[7.0, 8.0])),
            None,
        )
        .unwrap();
        let u = Graph::disjoint_union(&[&a, &b]).unwrap();
        let direct = Graph::new(
            &[(0, 1), (2, 4), (3, 4)],
            DMatrix::from_row_slice(5, 1, &[1.0, 2.0, 3.0, 4.0, 6.0]),
            Some(DMatrix::from_row_slice(3, 1, &[5.0, 7.0, 8.0])),
            None,
        )
        .unwrap();
        assert_eq!(u, direct);
        assert_eq!(Graph::disjoint_union(&[]).unwrap().n(), 0);
        let wide = Graph::new(&[], DMatrix::zeros(1, 2), None, None).unwrap();
        assert!(Graph::disjoint_union(&[&a, &wide]).is_err());
    }

    fn ones(n: usize) -> DMatrix<f64> {
        DMatrix::from_element(n, 1, 1.0)
    }

    #[test]
    fn single_edge() {
        let g = Graph::new(&[(0, 1)], ones(2), None, None).unwrap();
        assert_eq!((g.n(), g.m()), (2, 1));
        assert_eq!(g.degrees(), vec![1, 1]);
    }

    #[test]
    fn triangle_degrees() {
        let g = Graph::new(&[(0, 1), (1, 2), (0, 2)], ones(3), None, None).unwrap();
        assert_eq!((g.n(), g.m()), (3, 3));
        assert_eq!(g.degrees(), vec![2, 2, 2]);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(
            Graph::new(&[(0, 0)], ones(1), None, None),
            Err(Error::SelfLoop(0))
        ));
        assert!(matches!(
            Graph::new(&[(0, 1), (1, 0)], ones(2), None, None),
            Err(Error::DuplicateEdge(0, 1))
        ));
        assert!(matches!(
            Graph::new(&[(0, 2)], ones(2), None, None),
            Err(Error::NodeOutOfRange(..))
        ));
        assert!(matches!(
            Graph::new(&[(0, 1)], ones(2), Some(DMatrix::zeros(2, 1)), None),
            Err(Error::RowMismatch { .. })
        ));
        let mut x = ones(2);
        x[(1, 0)] = f64::NAN;
        assert!(matches!(
            Graph::new(&[(0, 1)], x, None, None),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn canonical_order_keeps_feature_rows() {
        let ef = DMatrix::from_row_slice(2, 1, &[7.0, 9.0]);
        let g = Graph::new(&[(2, 1), (0, 1)], ones(3), Some(ef), None).unwrap();
        assert_eq!(g.edges(), &[(1, 2), (0, 1)]);
        assert_eq!(g.edge_features()[(0, 0)], 7.0);
        assert_eq!(g.incident_edges(1), &[1, 0]);
    }

    #[test]
    fn laplacian_small_cases() {
        let k2 = Graph::from_edges(2, &[(0, 1)]).unwrap();
        assert_eq!(
            k2.laplacian().as_matrix(),
            &DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0])
        );
        let tri = Graph::from_edges(3, &[(0, 1), (1, 2), (0, 2)]).unwrap();
        let l = tri.laplacian();
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { 2.0 } else { -1.0 };
                assert_eq!(l.as_matrix()[(i, j)], want);
            }
        }
    }

    #[test]
    fn line_graphs() {
        let path = Graph::from_edges(3, &[(0, 1), (1, 2)]).unwrap();
        let lg = path.line_graph().unwrap();
        assert_eq!((lg.n(), lg.m()), (2, 1));

        let tri = Graph::from_edges(3, &[(0, 1), (1, 2), (0, 2)]).unwrap();
        let lg = tri.line_graph().unwrap();
        assert_eq!((lg.n(), lg.m()), (3, 3));
        assert_eq!(lg.line_graph().unwrap().n(), 3);

        let star = Graph::from_edges(4, &[(0, 1), (0, 2), (0, 3)]).unwrap();
        let lg = star.line_graph().unwrap();
        // Brute force: line-graph nodes a, b adjacent iff edges share an endpoint.
        let e = star.edges();
        for a in 0..e.len() {
            for b in 0..e.len() {
                let share = a != b
                    && (e[a].0 == e[b].0
                        || e[a].0 == e[b].1
                        || e[a].1 == e[b].0
                        || e[a].1 == e[b].1);
                assert_eq!(lg.has_edge(a, b), share);
            }
        }
        assert_eq!(lg.m(), 3);

        let empty = Graph::from_edges(2, &[]).unwrap();
        assert!(empty.line_graph().is_err());
    }

    #[test]
    fn line_graph_carries_edge_features() {
        let ef = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let g = Graph::new(&[(0, 1), (1, 2)], ones(3), Some(ef.clone()), None).unwrap();
        assert_eq!(g.line_graph().unwrap().node_features(), &ef);
    }

    #[test]
    fn components() {
        let g = Graph::from_edges(5, &[(0, 1), (3, 4)]).unwrap();
        let (comp, c) = g.connected_components();
        assert_eq!(c, 3);
        assert_eq!(comp, vec![0, 0, 1, 2, 2]);
    }

    #[test]
    fn symmetric_matrix_validation() {
        assert!(
            SymmetricMatrix::new(DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 1.0])).is_err()
        );
        assert!(SymmetricMatrix::new(DMatrix::zeros(2, 3)).is_err());
        assert!(SymmetricMatrix::new(DMatrix::identity(3, 3)).is_ok());
    }
}
