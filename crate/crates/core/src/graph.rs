//! Finite connected metric graphs and the vertex coupling matrix.
//!
//! Vertex ids are 1-based at the public surface (`build_graph`, error
//! messages) and 0-based everywhere else. Every edge is parametrized over
//! `[0, 1]` with `e_j(0)` its start vertex and `e_j(1)` its end vertex.

use std::collections::{BTreeSet, VecDeque};

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::report::ValidationReport;

/// Directed edge given by 0-based start and end vertex indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Edge {
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricGraph {
    n_vertices: usize,
    edges: Vec<Edge>,
    incident: Vec<BTreeSet<usize>>,
}

/// Builds a graph from 1-based vertex pairs. Parallel edges are accepted,
/// loops are rejected.
pub fn build_graph(n_vertices: usize, edge_list: &[(usize, usize)]) -> Result<MetricGraph> {
    if n_vertices == 0 {
        return Err(Error::NoVertices);
    }
    if edge_list.is_empty() {
        return Err(Error::EmptyEdgeList);
    }
    let mut edges = Vec::with_capacity(edge_list.len());
    for (j, &(a, b)) in edge_list.iter().enumerate() {
        for id in [a, b] {
            if id == 0 || id > n_vertices {
                return Err(Error::VertexIdOutOfRange { id, n: n_vertices });
            }
        }
        if a == b {
            return Err(Error::LoopEdge { edge: j + 1, vertex: a });
        }
        edges.push(Edge { start: a - 1, end: b - 1 });
    }
    let mut incident = vec![BTreeSet::new(); n_vertices];
    for (j, e) in edges.iter().enumerate() {
        incident[e.start].insert(j);
        incident[e.end].insert(j);
    }
    let graph = MetricGraph { n_vertices, edges, incident };
    if let Some(v) = graph.first_unreachable() {
        return Err(Error::DisconnectedGraph { vertex: v + 1 });
    }
    Ok(graph)
}

impl MetricGraph {
    pub fn n_vertices(&self) -> usize {
        self.n_vertices
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge(&self, j: usize) -> Edge {
        self.edges[j]
    }

    /// Γ(v_i) for a 0-based vertex index.
    pub fn incident_edges(&self, vertex: usize) -> &BTreeSet<usize> {
        &self.incident[vertex]
    }

    /// Γ(v_i) for a 1-based vertex id, returned as 1-based edge indices.
    pub fn edge_indices_at_vertex(&self, id: usize) -> Result<BTreeSet<usize>> {
        if id == 0 || id > self.n_vertices {
            return Err(Error::VertexIdOutOfRange { id, n: self.n_vertices });
        }
        Ok(self.incident[id - 1].iter().map(|j| j + 1).collect())
    }

    /// Signed incidence φ_ij: +1 if edge j starts at vertex i, −1 if it ends there.
    pub fn incidence_sign(&self, vertex: usize, edge: usize) -> f64 {
        let e = self.edges[edge];
        if e.start == vertex {
            1.0
        } else if e.end == vertex {
            -1.0
        } else {
            0.0
        }
    }

    /// (Φ⁺, Φ⁻, Φ) as dense n×m matrices.
    pub fn incidence_matrices(&self) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
        let (n, m) = (self.n_vertices, self.edges.len());
        let mut plus = DMatrix::zeros(n, m);
        let mut minus = DMatrix::zeros(n, m);
        for (j, e) in self.edges.iter().enumerate() {
            plus[(e.start, j)] = 1.0;
            minus[(e.end, j)] = 1.0;
        }
        let phi = &plus - &minus;
        (plus, minus, phi)
    }

    /// Weighted incidence matrices (Φ_w⁺, Φ_w⁻) with ω⁺_ij = μ_j c_j(0) at the
    /// start vertex and ω⁻_ij = μ_j c_j(1) at the end vertex.
    pub fn weighted_incidence(
        &self,
        weights: &[f64],
        c_at_endpoints: &[(f64, f64)],
    ) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        let m = self.edges.len();
        for found in [weights.len(), c_at_endpoints.len()] {
            if found != m {
                return Err(Error::DimensionMismatch { expected: m, found });
            }
        }
        if let Some((j, &w)) = weights.iter().enumerate().find(|(_, &w)| !(w > 0.0)) {
            return Err(Error::NonpositiveWeight { edge: j + 1, value: w });
        }
        let mut plus = DMatrix::zeros(self.n_vertices, m);
        let mut minus = DMatrix::zeros(self.n_vertices, m);
        for (j, e) in self.edges.iter().enumerate() {
            plus[(e.start, j)] = weights[j] * c_at_endpoints[j].0;
            minus[(e.end, j)] = weights[j] * c_at_endpoints[j].1;
        }
        Ok((plus, minus))
    }

    fn first_unreachable(&self) -> Option<usize> {
        let mut seen = vec![false; self.n_vertices];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        while let Some(v) = queue.pop_front() {
            for &j in &self.incident[v] {
                let e = self.edges[j];
                let w = if e.start == v { e.end } else { e.start };
                if !seen[w] {
                    seen[w] = true;
                    queue.push_back(w);
                }
            }
        }
        seen.iter().position(|s| !s)
    }
}

/// Which assumption set a vertex matrix is checked against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VertexProfile {
    /// Real, symmetric, negative semidefinite, not identically zero.
    #[default]
    Basic,
    /// Basic plus nonnegative off-diagonal and diagonal dominance.
    Strict,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VertexMatrix {
    entries: DMatrix<f64>,
}

impl VertexMatrix {
    pub fn new(entries: DMatrix<f64>) -> Result<Self> {
        if entries.nrows() != entries.ncols() {
            return Err(Error::DimensionMismatch { expected: entries.nrows(), found: entries.ncols() });
        }
        Ok(Self { entries })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if let Some(r) = rows.iter().find(|r| r.len() != n) {
            return Err(Error::DimensionMismatch { expected: n, found: r.len() });
        }
        Self::new(DMatrix::from_fn(n, n, |i, k| rows[i][k]))
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn get(&self, i: usize, k: usize) -> f64 {
        self.entries[(i, k)]
    }

    pub fn max_abs(&self) -> f64 {
        self.entries.iter().fold(0.0f64, |a, &b| a.max(b.abs()))
    }

    /// Eigenvalues in descending order.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let sym = (&self.entries + self.entries.transpose()) * 0.5;
        let mut ev: Vec<f64> = SymmetricEigen::new(sym).eigenvalues.iter().copied().collect();
        ev.sort_by(|a, b| b.total_cmp(a));
        ev
    }

    /// Largest value of `b_ii + Σ_{k≠i} |b_ik|`; nonpositive iff `e^{tM}` is ℓ∞-contractive.
    pub fn worst_row_slack(&self) -> f64 {
        let n = self.dim();
        (0..n)
            .map(|i| {
                self.entries[(i, i)]
                    + (0..n).filter(|&k| k != i).map(|k| self.entries[(i, k)].abs()).sum::<f64>()
            })
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Tolerance on the largest eigenvalue when testing semidefiniteness.
pub fn psd_tolerance(m: &VertexMatrix) -> f64 {
    1e-10 * (1.0 + m.max_abs())
}

/// Checks a vertex matrix against the basic or strict profile.
///
/// `allow_zero` lifts the `M ≢ 0` requirement (classical Kirchhoff); the check
/// is then kept in the report as non-mandatory and annotated.
pub fn validate_vertex_matrix(
    graph: &MetricGraph,
    m: &VertexMatrix,
    profile: VertexProfile,
    allow_zero: bool,
) -> Result<ValidationReport> {
    if m.dim() != graph.n_vertices() {
        return Err(Error::DimensionMismatch { expected: graph.n_vertices(), found: m.dim() });
    }
    Ok(vertex_matrix_report(m, profile, allow_zero))
}

pub(crate) fn vertex_matrix_report(m: &VertexMatrix, profile: VertexProfile, allow_zero: bool) -> ValidationReport {
    let n = m.dim();
    let b = m.entries();
    let mut report = ValidationReport::new("vertex_matrix");

    let asym = (0..n)
        .flat_map(|i| (0..n).map(move |k| (i, k)))
        .map(|(i, k)| (b[(i, k)] - b[(k, i)]).abs())
        .fold(0.0f64, f64::max);
    report.push("symmetric", asym == 0.0, asym, 0.0);

    let tol = psd_tolerance(m);
    let lmax = m.eigenvalues().first().copied().unwrap_or(0.0);
    report.push("negative_semidefinite", lmax <= tol, lmax, tol);

    let max_abs = m.max_abs();
    let nz = report.push("nonzero", max_abs > 0.0, max_abs, 0.0);
    if allow_zero {
        nz.mandatory = false;
        if max_abs == 0.0 {
            nz.note = Some("M = 0 accepted by override; outside the standing hypotheses".into());
        }
    }

    if profile == VertexProfile::Strict {
        let min_off = (0..n)
            .flat_map(|i| (0..n).filter(move |&k| k != i).map(move |k| (i, k)))
            .map(|(i, k)| b[(i, k)])
            .fold(f64::INFINITY, f64::min);
        let min_off = if min_off.is_finite() { min_off } else { 0.0 };
        report.push("offdiagonal_nonnegative", min_off >= 0.0, min_off, 0.0);
        let slack = (0..n)
            .map(|i| b[(i, i)] + (0..n).filter(|&k| k != i).map(|k| b[(i, k)]).sum::<f64>())
            .fold(f64::NEG_INFINITY, f64::max);
        report.push("diagonally_dominant", slack <= 0.0, slack, 0.0);
    }
    report.refresh();
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn p3() -> MetricGraph {
        build_graph(3, &[(1, 2), (2, 3)]).unwrap()
    }

    fn star3() -> MetricGraph {
        build_graph(4, &[(1, 2), (1, 3), (1, 4)]).unwrap()
    }

    #[test]
    fn builds_path_and_multigraph() {
        assert_eq!(p3().n_edges(), 2);
        let g = build_graph(2, &[(1, 2), (1, 2)]).unwrap();
        assert_eq!(g.n_edges(), 2);
        assert_eq!(g.edge_indices_at_vertex(1).unwrap(), BTreeSet::from([1, 2]));
    }

    #[test]
    fn structural_errors() {
        assert!(matches!(build_graph(4, &[(1, 2)]), Err(Error::DisconnectedGraph { .. })));
        assert!(matches!(build_graph(2, &[(1, 3)]), Err(Error::VertexIdOutOfRange { id: 3, .. })));
        assert!(matches!(build_graph(2, &[]), Err(Error::EmptyEdgeList)));
        assert!(matches!(build_graph(2, &[(1, 2), (2, 2)]), Err(Error::LoopEdge { edge: 2, .. })));
    }

    #[test]
    fn incidence_of_path() {
        let (plus, minus, phi) = p3().incidence_matrices();
        assert_eq!(plus, DMatrix::from_row_slice(3, 2, &[1., 0., 0., 1., 0., 0.]));
        assert_eq!(minus, DMatrix::from_row_slice(3, 2, &[0., 0., 1., 0., 0., 1.]));
        assert_eq!(phi, DMatrix::from_row_slice(3, 2, &[1., 0., -1., 1., 0., -1.]));
        let single = build_graph(2, &[(1, 2)]).unwrap();
        assert_eq!(single.incidence_matrices().2, DMatrix::from_row_slice(2, 1, &[1., -1.]));
        let (plus, _, _) = star3().incidence_matrices();
        assert_eq!(plus.row(0).iter().copied().collect::<Vec<_>>(), vec![1., 1., 1.]);
    }

    #[test]
    fn gamma_sets() {
        let g = p3();
        assert_eq!(g.edge_indices_at_vertex(2).unwrap(), BTreeSet::from([1, 2]));
        assert_eq!(g.edge_indices_at_vertex(1).unwrap(), BTreeSet::from([1]));
        assert_eq!(star3().edge_indices_at_vertex(1).unwrap(), BTreeSet::from([1, 2, 3]));
        assert!(matches!(g.edge_indices_at_vertex(4), Err(Error::VertexIdOutOfRange { .. })));
    }

    #[test]
    fn weighted_incidence_examples() {
        let single = build_graph(2, &[(1, 2)]).unwrap();
        let (wp, wm) = single.weighted_incidence(&[1.0], &[(1.0, 1.0)]).unwrap();
        assert_eq!(wp, DMatrix::from_row_slice(2, 1, &[1., 0.]));
        assert_eq!(wm, DMatrix::from_row_slice(2, 1, &[0., 1.]));
        let (wp, _) = p3().weighted_incidence(&[2.0, 3.0], &[(1.0, 1.0); 2]).unwrap();
        assert_eq!(wp, DMatrix::from_row_slice(3, 2, &[2., 0., 0., 3., 0., 0.]));
        assert!(matches!(
            p3().weighted_incidence(&[0.0, 1.0], &[(1.0, 1.0); 2]),
            Err(Error::NonpositiveWeight { edge: 1, .. })
        ));
    }

    #[test]
    fn vertex_matrix_examples() {
        let g = build_graph(2, &[(1, 2)]).unwrap();
        let m = VertexMatrix::from_rows(&[vec![-1., 1.], vec![1., -1.]]).unwrap();
        let r = validate_vertex_matrix(&g, &m, VertexProfile::Strict, false).unwrap();
        assert!(r.passed);
        let ev = m.eigenvalues();
        assert!(ev[0].abs() < 1e-14 && (ev[1] + 2.0).abs() < 1e-14);
        assert_eq!(r.check("diagonally_dominant").unwrap().measured, 0.0);

        let bad = VertexMatrix::from_rows(&[vec![1., 0.], vec![0., -1.]]).unwrap();
        let r = validate_vertex_matrix(&g, &bad, VertexProfile::Basic, false).unwrap();
        assert!(!r.passed);
        assert!(!r.check("negative_semidefinite").unwrap().passed);

        let half = VertexMatrix::from_rows(&[vec![-1., 0.], vec![0., 0.]]).unwrap();
        assert!(validate_vertex_matrix(&g, &half, VertexProfile::Basic, false).unwrap().passed);
        assert!(validate_vertex_matrix(&g, &half, VertexProfile::Strict, false).unwrap().passed);

        let three = VertexMatrix::from_rows(&[vec![-1.; 3], vec![-1.; 3], vec![-1.; 3]]).unwrap();
        assert!(matches!(
            validate_vertex_matrix(&g, &three, VertexProfile::Basic, false),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn zero_matrix_needs_override() {
        let g = build_graph(2, &[(1, 2)]).unwrap();
        let zero = VertexMatrix::new(DMatrix::zeros(2, 2)).unwrap();
        assert!(!validate_vertex_matrix(&g, &zero, VertexProfile::Basic, false).unwrap().passed);
        let r = validate_vertex_matrix(&g, &zero, VertexProfile::Basic, true).unwrap();
        assert!(r.passed);
        assert!(r.check("nonzero").unwrap().note.as_deref().unwrap().contains("outside"));
    }

    #[test]
    fn asymmetry_is_reported_exactly() {
        let g = build_graph(2, &[(1, 2)]).unwrap();
        let m = VertexMatrix::from_rows(&[vec![-1., 0.5], vec![0.5 + 1e-15, -1.]]).unwrap();
        let r = validate_vertex_matrix(&g, &m, VertexProfile::Basic, false).unwrap();
        assert!(!r.check("symmetric").unwrap().passed);
    }

    fn reachable_oracle(n: usize, edges: &[(usize, usize)]) -> bool {
        // Floyd–Warshall style transitive closure on the undirected adjacency.
        let mut adj = vec![vec![false; n]; n];
        for i in 0..n {
            adj[i][i] = true;
        }
        for &(a, b) in edges {
            adj[a - 1][b - 1] = true;
            adj[b - 1][a - 1] = true;
        }
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    if adj[i][k] && adj[k][j] {
                        adj[i][j] = true;
                    }
                }
            }
        }
        adj[0].iter().all(|&r| r)
    }

    proptest! {
        #[test]
        fn connectivity_matches_closure(n in 1usize..=8, raw in prop::collection::vec((1usize..=8, 1usize..=8), 1..12)) {
            let edges: Vec<_> = raw.into_iter()
                .map(|(a, b)| ((a - 1) % n + 1, (b - 1) % n + 1))
                .filter(|(a, b)| a != b)
                .collect();
            prop_assume!(!edges.is_empty());
            let built = build_graph(n, &edges);
            prop_assert_eq!(built.is_ok(), reachable_oracle(n, &edges));
            if let Ok(g) = built {
                let (plus, minus, phi) = g.incidence_matrices();
                for j in 0..g.n_edges() {
                    prop_assert_eq!(plus.column(j).sum(), 1.0);
                    prop_assert_eq!(minus.column(j).sum(), 1.0);
                    prop_assert_eq!(phi.column(j).sum(), 0.0);
                }
                for i in 0..n {
                    for j in 0..g.n_edges() {
                        let inc = plus[(i, j)] + minus[(i, j)] >= 1.0;
                        prop_assert_eq!(g.incident_edges(i).contains(&j), inc);
                    }
                }
            }
        }

        #[test]
        fn strict_implies_basic(n in 2usize..6, seed in prop::collection::vec(0.0f64..2.0, 36)) {
            let g = build_graph(n, &(1..n).map(|i| (i, i + 1)).collect::<Vec<_>>()).unwrap();
            let mut m = DMatrix::zeros(n, n);
            for i in 0..n {
                for k in (i + 1)..n {
                    let v = seed[i * 6 + k];
                    m[(i, k)] = v;
                    m[(k, i)] = v;
                }
            }
            for i in 0..n {
                let off: f64 = (0..n).filter(|&k| k != i).map(|k| m[(i, k)]).sum();
                m[(i, i)] = -off - seed[30 + i % 6];
            }
            let vm = VertexMatrix::new(m).unwrap();
            let strict = validate_vertex_matrix(&g, &vm, VertexProfile::Strict, false).unwrap();
            if strict.passed {
                prop_assert!(validate_vertex_matrix(&g, &vm, VertexProfile::Basic, false).unwrap().passed);
                prop_assert!(vm.worst_row_slack() <= 1e-12);
            }
        }
    }
}
