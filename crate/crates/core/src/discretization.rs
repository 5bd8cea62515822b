//! Continuous P1 finite elements on the metric graph.
//!
//! Every edge carries a uniform mesh with `N_int` interior nodes and spacing
//! `h = 1/(N_int + 1)`. Interior degrees of freedom are numbered edge by edge
//! (`j·N_int + l − 1` for local node `l`), followed by one shared degree of
//! freedom per vertex (`m·N_int + i`). Continuity across vertices therefore
//! holds for every coefficient vector, and the vertex value `q_i` is read
//! directly from the shared entry.
//!
//! The Kirchhoff law is the natural boundary condition of the weak form and
//! is not imposed strongly; it is only recovered as `h → 0`.

use std::io;
use std::ops::{Deref, DerefMut};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coefficients::EdgeFieldSet;
use crate::error::{Error, Result};
use crate::graph::{MetricGraph, VertexMatrix};
use crate::linalg::{CsrMatrix, SkylineCholesky};

const GAUSS2: [(f64, f64); 2] = [(0.211_324_865_405_187_1, 0.5), (0.788_675_134_594_812_9, 0.5)];
const GAUSS3: [(f64, f64); 3] = [
    (0.112_701_665_379_258_3, 5.0 / 18.0),
    (0.5, 8.0 / 18.0),
    (0.887_298_334_620_741_7, 5.0 / 18.0),
];

#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    graph: MetricGraph,
    n_int: usize,
    h: f64,
}

pub fn build_mesh(graph: &MetricGraph, interior_nodes: usize) -> Result<Mesh> {
    if interior_nodes < 1 {
        return Err(Error::MeshTooCoarse(interior_nodes));
    }
    Ok(Mesh { graph: graph.clone(), n_int: interior_nodes, h: 1.0 / (interior_nodes + 1) as f64 })
}

impl Mesh {
    pub fn graph(&self) -> &MetricGraph {
        &self.graph
    }

    pub fn interior_nodes(&self) -> usize {
        self.n_int
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn n_dofs(&self) -> usize {
        self.graph.n_edges() * self.n_int + self.graph.n_vertices()
    }

    pub fn vertex_dof(&self, vertex: usize) -> usize {
        self.graph.n_edges() * self.n_int + vertex
    }

    /// Global index of local node `l ∈ 0..=N_int+1` on edge `j`.
    pub fn dof(&self, edge: usize, local: usize) -> usize {
        let e = self.graph.edge(edge);
        if local == 0 {
            self.vertex_dof(e.start)
        } else if local == self.n_int + 1 {
            self.vertex_dof(e.end)
        } else {
            edge * self.n_int + local - 1
        }
    }

    pub fn node_x(&self, local: usize) -> f64 {
        if local == self.n_int + 1 {
            1.0
        } else {
            local as f64 * self.h
        }
    }

    /// Mesh nodes and 2-point Gauss points on `[0, 1]`.
    pub fn sample_points(&self) -> Vec<f64> {
        let mut pts: Vec<f64> = (0..=self.n_int + 1).map(|l| self.node_x(l)).collect();
        for l in 0..=self.n_int {
            for (s, _) in GAUSS2 {
                pts.push(self.node_x(l) + s * self.h);
            }
        }
        pts
    }

    /// For every dof, the `(edge, x)` positions it represents.
    pub fn node_incidences(&self) -> Vec<Vec<(usize, f64)>> {
        let mut out = vec![Vec::new(); self.n_dofs()];
        for j in 0..self.graph.n_edges() {
            for l in 1..=self.n_int {
                out[self.dof(j, l)].push((j, self.node_x(l)));
            }
            let e = self.graph.edge(j);
            out[self.vertex_dof(e.start)].push((j, 0.0));
            out[self.vertex_dof(e.end)].push((j, 1.0));
        }
        out
    }
}

/// Nodal coefficient vector of a P1 function on the graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateVector(pub Vec<f64>);

impl StateVector {
    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    pub fn constant(n: usize, v: f64) -> Self {
        Self(vec![v; n])
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for StateVector {
    type Target = Vec<f64>;
    fn deref(&self) -> &Vec<f64> {
        &self.0
    }
}

impl DerefMut for StateVector {
    fn deref_mut(&mut self) -> &mut Vec<f64> {
        &mut self.0
    }
}

impl From<Vec<f64>> for StateVector {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

/// Vertex values `q = Lu`.
pub fn vertex_values(mesh: &Mesh, u: &[f64]) -> Vec<f64> {
    (0..mesh.graph.n_vertices()).map(|i| u[mesh.vertex_dof(i)]).collect()
}

/// Nodal interpolation of `f(edge, x)`; values at a shared vertex must agree
/// across incident edges to within `1e−12`.
pub fn interpolate(mesh: &Mesh, f: impl Fn(usize, f64) -> f64) -> Result<StateVector> {
    let mut u = vec![0.0; mesh.n_dofs()];
    let mut seen: Vec<Option<f64>> = vec![None; mesh.graph.n_vertices()];
    for j in 0..mesh.graph.n_edges() {
        for l in 1..=mesh.n_int {
            u[mesh.dof(j, l)] = f(j, mesh.node_x(l));
        }
        let e = mesh.graph.edge(j);
        for (v, x) in [(e.start, 0.0), (e.end, 1.0)] {
            let val = f(j, x);
            match seen[v] {
                None => seen[v] = Some(val),
                Some(prev) if (prev - val).abs() > 1e-12 => {
                    return Err(Error::VertexMismatch { vertex: v + 1, first: prev, second: val });
                }
                Some(_) => {}
            }
        }
    }
    for (v, val) in seen.into_iter().enumerate() {
        u[mesh.vertex_dof(v)] = val.unwrap_or(0.0);
    }
    Ok(StateVector(u))
}

/// Piecewise-linear reconstruction of `u` on edge `j` at `x ∈ [0, 1]`.
pub fn eval_state(mesh: &Mesh, u: &[f64], edge: usize, x: f64) -> f64 {
    let cells = (mesh.n_int + 1) as f64;
    let s = x.clamp(0.0, 1.0) * cells;
    let l = (s.floor() as usize).min(mesh.n_int);
    let w = s - l as f64;
    (1.0 - w) * u[mesh.dof(edge, l)] + w * u[mesh.dof(edge, l + 1)]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Norm {
    E2,
    Ep(f64),
    EInf,
}

/// Discrete `E_p` norms with weights `μ_j`, by 3-point Gauss quadrature per
/// element (exact for p = 2); the `E_∞` norm is the max nodal value.
pub fn discrete_norms(mesh: &Mesh, weights: &[f64], u: &[f64], norm: Norm) -> f64 {
    match norm {
        Norm::EInf => u.iter().fold(0.0f64, |a, v| a.max(v.abs())),
        Norm::E2 => discrete_norms(mesh, weights, u, Norm::Ep(2.0)),
        Norm::Ep(p) => {
            let mut total = 0.0;
            for (j, &mu) in weights.iter().enumerate().take(mesh.graph.n_edges()) {
                let mut edge_sum = 0.0;
                for l in 0..=mesh.n_int {
                    let (a, b) = (u[mesh.dof(j, l)], u[mesh.dof(j, l + 1)]);
                    for (s, w) in GAUSS3 {
                        edge_sum += w * ((1.0 - s) * a + s * b).abs().powf(p);
                    }
                }
                total += mu * edge_sum * mesh.h;
            }
            total.powf(1.0 / p)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MassKind {
    #[default]
    Consistent,
    Lumped,
}

/// Data needed to evaluate the Kirchhoff residual at the vertices.
#[derive(Debug, Clone)]
pub struct VertexData {
    pub vertex_matrix: VertexMatrix,
    pub weights: Vec<f64>,
    /// `(c_j(0), c_j(1))`
    pub conductance_ends: Vec<(f64, f64)>,
}

/// Assembled matrices of the discrete form: `G` (mass), `S` (stiffness plus
/// potential), `K = −M` on the vertex dofs, and `form = S + K`; the discrete
/// generator is `A_h = −G⁻¹(S + K)`.
#[derive(Debug, Clone)]
pub struct DiscreteSystem {
    mesh: Option<Mesh>,
    mass: CsrMatrix,
    mass_kind: MassKind,
    consistent_mass: CsrMatrix,
    stiffness_potential: CsrMatrix,
    vertex_coupling: CsrMatrix,
    form: CsrMatrix,
    nodes: Vec<Vec<(usize, f64)>>,
    vertex_data: Option<VertexData>,
}

pub fn assemble_form(mesh: &Mesh, fields: &EdgeFieldSet, m: &VertexMatrix) -> Result<DiscreteSystem> {
    let graph = mesh.graph();
    if fields.n_edges() != graph.n_edges() {
        return Err(Error::DimensionMismatch { expected: graph.n_edges(), found: fields.n_edges() });
    }
    if m.dim() != graph.n_vertices() {
        return Err(Error::DimensionMismatch { expected: graph.n_vertices(), found: m.dim() });
    }
    let n = mesh.n_dofs();
    let h = mesh.h;
    type Triplets = Vec<(usize, usize, f64)>;
    let per_edge: Vec<(Triplets, Triplets)> = (0..graph.n_edges())
        .into_par_iter()
        .map(|j| {
            let mu = fields.weight(j);
            let mut mass = Vec::with_capacity(4 * (mesh.n_int + 1));
            let mut stiff = Vec::with_capacity(4 * (mesh.n_int + 1));
            for l in 0..=mesh.n_int {
                let (a, b) = (mesh.dof(j, l), mesh.dof(j, l + 1));
                let x0 = mesh.node_x(l);
                let mut c_int = 0.0;
                let mut paa = 0.0;
                let mut pab = 0.0;
                let mut pbb = 0.0;
                for (s, w) in GAUSS2 {
                    let x = x0 + s * h;
                    c_int += w * h * fields.conductance(j, x);
                    let p = w * h * fields.potential(j, x);
                    paa += p * (1.0 - s) * (1.0 - s);
                    pab += p * (1.0 - s) * s;
                    pbb += p * s * s;
                }
                let k = mu * c_int / (h * h);
                stiff.push((a, a, k + mu * paa));
                let off = -k + mu * pab;
                stiff.push((a, b, off));
                stiff.push((b, a, off));
                stiff.push((b, b, k + mu * pbb));
                let md = mu * h / 3.0;
                let mo = mu * h / 6.0;
                mass.push((a, a, md));
                mass.push((a, b, mo));
                mass.push((b, a, mo));
                mass.push((b, b, md));
            }
            (mass, stiff)
        })
        .collect();
    let mut mass_t = Vec::new();
    let mut stiff_t = Vec::new();
    for (mt, st) in per_edge {
        mass_t.extend(mt);
        stiff_t.extend(st);
    }
    let mut coupling_t = Vec::new();
    for i in 0..graph.n_vertices() {
        for k in 0..graph.n_vertices() {
            let b = m.get(i, k);
            if b != 0.0 {
                coupling_t.push((mesh.vertex_dof(i), mesh.vertex_dof(k), -b));
            }
        }
    }
    let mass = CsrMatrix::from_triplets(n, n, &mass_t);
    let stiffness_potential = CsrMatrix::from_triplets(n, n, &stiff_t);
    let vertex_coupling = CsrMatrix::from_triplets(n, n, &coupling_t);
    let form = stiffness_potential.combine(1.0, &vertex_coupling, 1.0);
    let vertex_data = VertexData {
        vertex_matrix: m.clone(),
        weights: fields.weights(),
        conductance_ends: (0..graph.n_edges()).map(|j| (fields.conductance(j, 0.0), fields.conductance(j, 1.0))).collect(),
    };
    Ok(DiscreteSystem {
        nodes: mesh.node_incidences(),
        mesh: Some(mesh.clone()),
        consistent_mass: mass.clone(),
        mass,
        mass_kind: MassKind::Consistent,
        stiffness_potential,
        vertex_coupling,
        form,
        vertex_data: Some(vertex_data),
    })
}

impl DiscreteSystem {
    /// A system given directly by its mass and form matrices, without a mesh.
    /// Every dof is treated as a point of edge 0 at `x = 0` when coefficients are evaluated.
    pub fn from_matrices(mass: CsrMatrix, form: CsrMatrix) -> Result<Self> {
        let n = mass.nrows();
        for found in [mass.ncols(), form.nrows(), form.ncols()] {
            if found != n {
                return Err(Error::DimensionMismatch { expected: n, found });
            }
        }
        let mass_kind = if mass.is_diagonal() { MassKind::Lumped } else { MassKind::Consistent };
        Ok(Self {
            mesh: None,
            consistent_mass: mass.clone(),
            mass,
            mass_kind,
            stiffness_potential: form.clone(),
            vertex_coupling: CsrMatrix::from_triplets(n, n, &[]),
            form,
            nodes: vec![vec![(0, 0.0)]; n],
            vertex_data: None,
        })
    }

    /// Same system with the row-sum lumped mass matrix.
    pub fn with_lumped_mass(&self) -> DiscreteSystem {
        let lumped = self.consistent_mass.row_sums();
        DiscreteSystem {
            mass: CsrMatrix::diagonal(&lumped),
            mass_kind: MassKind::Lumped,
            ..self.clone()
        }
    }

    pub fn with_mass(&self, kind: MassKind) -> DiscreteSystem {
        match kind {
            MassKind::Consistent => DiscreteSystem { mass: self.consistent_mass.clone(), mass_kind: kind, ..self.clone() },
            MassKind::Lumped => self.with_lumped_mass(),
        }
    }

    pub fn n_dofs(&self) -> usize {
        self.mass.nrows()
    }

    pub fn mesh(&self) -> Option<&Mesh> {
        self.mesh.as_ref()
    }

    pub fn mass(&self) -> &CsrMatrix {
        &self.mass
    }

    pub fn mass_kind(&self) -> MassKind {
        self.mass_kind
    }

    pub fn consistent_mass(&self) -> &CsrMatrix {
        &self.consistent_mass
    }

    pub fn lumped_mass(&self) -> Vec<f64> {
        self.consistent_mass.row_sums()
    }

    pub fn stiffness_potential(&self) -> &CsrMatrix {
        &self.stiffness_potential
    }

    pub fn vertex_coupling(&self) -> &CsrMatrix {
        &self.vertex_coupling
    }

    /// `S + K`, the matrix of the bilinear form.
    pub fn form(&self) -> &CsrMatrix {
        &self.form
    }

    /// `A_form = −(S + K)`.
    pub fn a_form(&self) -> CsrMatrix {
        self.form.scaled(-1.0)
    }

    pub fn node_incidences(&self) -> &[Vec<(usize, f64)>] {
        &self.nodes
    }

    pub fn vertex_data(&self) -> Option<&VertexData> {
        self.vertex_data.as_ref()
    }

    /// `√(uᵀ G u)`, equal to the `E_2` norm of the P1 function for the consistent mass.
    pub fn mass_norm(&self, u: &[f64]) -> f64 {
        self.mass.quad_form(u).max(0.0).sqrt()
    }

    /// `Σ_j μ_j ∫ u_j = 𝟙ᵀ G u` (consistent mass).
    pub fn total_mass(&self, u: &[f64]) -> f64 {
        self.consistent_mass.mul_vec(u).iter().sum()
    }

    pub fn weights(&self) -> Vec<f64> {
        self.vertex_data.as_ref().map(|v| v.weights.clone()).unwrap_or_else(|| vec![1.0])
    }

    /// Norm of a state; falls back to the mass norm and the max norm for
    /// systems without a mesh.
    pub fn norm(&self, u: &[f64], norm: Norm) -> f64 {
        match (&self.mesh, norm) {
            (_, Norm::EInf) => crate::linalg::max_abs(u),
            (Some(mesh), _) => discrete_norms(mesh, &self.weights(), u, norm),
            (None, Norm::E2) => self.mass_norm(u),
            (None, Norm::Ep(p)) => {
                let d = self.mass.diag();
                u.iter().zip(&d).map(|(v, w)| w * v.abs().powf(p)).sum::<f64>().powf(1.0 / p)
            }
        }
    }

    /// Writes `mass.mtx`, `stiffness_potential.mtx`, `vertex_coupling.mtx` and `form.mtx`.
    pub fn write_matrix_market(&self, dir: &Path) -> io::Result<()> {
        std::fs::create_dir_all(dir)?;
        for (name, mat) in [
            ("mass", &self.mass),
            ("stiffness_potential", &self.stiffness_potential),
            ("vertex_coupling", &self.vertex_coupling),
            ("form", &self.form),
        ] {
            let file = std::fs::File::create(dir.join(format!("{name}.mtx")))?;
            mat.write_matrix_market(io::BufWriter::new(file))?;
        }
        Ok(())
    }
}

/// Factor `L_G` with `L_G L_Gᵀ = G`.
#[derive(Debug, Clone)]
pub enum CovarianceFactor {
    Sparse(SkylineCholesky),
    Diagonal(Vec<f64>),
}

impl CovarianceFactor {
    pub fn dim(&self) -> usize {
        match self {
            CovarianceFactor::Sparse(f) => f.dim(),
            CovarianceFactor::Diagonal(d) => d.len(),
        }
    }

    /// `out = L_G z`
    pub fn apply_into(&self, z: &[f64], out: &mut [f64]) {
        match self {
            CovarianceFactor::Sparse(f) => f.mul_lower_into(z, out),
            CovarianceFactor::Diagonal(d) => {
                for ((o, zi), di) in out.iter_mut().zip(z).zip(d) {
                    *o = di * zi;
                }
            }
        }
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        match self {
            CovarianceFactor::Sparse(f) => f.to_dense_lower(),
            CovarianceFactor::Diagonal(d) => nalgebra::DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(d)),
        }
    }
}

/// Lower-triangular factor of the system's mass matrix (diagonal square roots
/// when the mass is lumped).
pub fn noise_covariance_factor(sys: &DiscreteSystem) -> Result<CovarianceFactor> {
    if sys.mass.is_diagonal() {
        let d = sys.mass.diag();
        if let Some((i, &v)) = d.iter().enumerate().find(|(_, &v)| !(v > 0.0)) {
            return Err(Error::FactorizationFailure { pivot: i, value: v });
        }
        return Ok(CovarianceFactor::Diagonal(d.iter().map(|v| v.sqrt()).collect()));
    }
    SkylineCholesky::factor(&sys.mass).map(CovarianceFactor::Sparse)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::{build_edge_fields, EdgeField, Profile, ScalarFn};
    use crate::expr::Expr;
    use crate::graph::build_graph;
    use nalgebra::DMatrix;
    use proptest::prelude::*;

    fn single_edge(n_int: usize) -> (Mesh, EdgeFieldSet) {
        let g = build_graph(2, &[(1, 2)]).unwrap();
        let mesh = build_mesh(&g, n_int).unwrap();
        let fields = build_edge_fields(vec![EdgeField::uniform(1.0, 0.0, 1.0)], &mesh).unwrap();
        (mesh, fields)
    }

    fn zero_m(n: usize) -> VertexMatrix {
        VertexMatrix::new(DMatrix::zeros(n, n)).unwrap()
    }

    /// Reorders a 3-dof single-edge matrix to (v-start, interior, v-end).
    fn natural_order(a: &CsrMatrix) -> DMatrix<f64> {
        let perm = [1usize, 0, 2];
        let d = a.to_dense();
        DMatrix::from_fn(3, 3, |r, c| d[(perm[r], perm[c])])
    }

    #[test]
    fn dof_counts() {
        let (mesh, _) = single_edge(1);
        assert_eq!(mesh.n_dofs(), 3);
        let p3 = build_graph(3, &[(1, 2), (2, 3)]).unwrap();
        assert_eq!(build_mesh(&p3, 3).unwrap().n_dofs(), 9);
        let star = build_graph(4, &[(1, 2), (1, 3), (1, 4)]).unwrap();
        assert!(matches!(build_mesh(&star, 0), Err(Error::MeshTooCoarse(0))));
    }

    #[test]
    fn single_edge_element_matrices() {
        let (mesh, fields) = single_edge(1);
        let sys = assemble_form(&mesh, &fields, &zero_m(2)).unwrap();
        let s = natural_order(sys.stiffness_potential());
        assert_eq!(s, DMatrix::from_row_slice(3, 3, &[2., -2., 0., -2., 4., -2., 0., -2., 2.]));
        let g = natural_order(sys.mass());
        let expect = DMatrix::from_row_slice(3, 3, &[2., 1., 0., 1., 4., 1., 0., 1., 2.]) * (0.5 / 6.0);
        assert!((g - expect).abs().max() < 1e-16);
    }

    #[test]
    fn vertex_coupling_is_minus_m() {
        let (mesh, fields) = single_edge(1);
        let m = VertexMatrix::from_rows(&[vec![-1., 1.], vec![1., -1.]]).unwrap();
        let sys = assemble_form(&mesh, &fields, &m).unwrap();
        let k = natural_order(sys.vertex_coupling());
        assert_eq!(k, DMatrix::from_row_slice(3, 3, &[1., 0., -1., 0., 0., 0., -1., 0., 1.]));
        let f = natural_order(sys.form());
        assert_eq!(f[(0, 0)], 3.0);
        assert_eq!(f[(0, 2)], -1.0);
    }

    #[test]
    fn covariance_factor_reconstructs_mass() {
        let (mesh, fields) = single_edge(1);
        let sys = assemble_form(&mesh, &fields, &zero_m(2)).unwrap();
        let l = noise_covariance_factor(&sys).unwrap().to_dense();
        let err = (&l * l.transpose() - sys.mass().to_dense()).abs().max();
        assert!(err < 1e-14, "{err}");
        let lumped = sys.with_lumped_mass();
        let CovarianceFactor::Diagonal(d) = noise_covariance_factor(&lumped).unwrap() else { panic!() };
        let expect: Vec<f64> = lumped.mass().diag().iter().map(|v| v.sqrt()).collect();
        assert_eq!(d, expect);
    }

    #[test]
    fn interpolation_and_reconstruction() {
        let p3 = build_graph(3, &[(1, 2), (2, 3)]).unwrap();
        let mesh = build_mesh(&p3, 3).unwrap();
        let one = interpolate(&mesh, |_, _| 1.0).unwrap();
        assert!(one.iter().all(|&v| v == 1.0));
        let bad = interpolate(&mesh, |j, x| if j == 0 { 2.0 * x } else { 3.0 });
        assert!(matches!(bad, Err(Error::VertexMismatch { vertex: 2, .. })));
        let u = interpolate(&mesh, |j, x| j as f64 + x * x).unwrap_or_else(|_| {
            interpolate(&mesh, |j, x| if j == 0 { x * x } else { 1.0 + x * x }).unwrap()
        });
        for j in 0..2 {
            for l in 0..=4 {
                assert_eq!(eval_state(&mesh, &u, j, mesh.node_x(l)), u[mesh.dof(j, l)]);
            }
        }
        assert!((eval_state(&mesh, &u, 0, 0.125) - 0.5 * (0.0 + 0.0625)).abs() < 1e-15);
    }

    #[test]
    fn norm_examples() {
        let p3 = build_graph(3, &[(1, 2), (2, 3)]).unwrap();
        let mesh = build_mesh(&p3, 3).unwrap();
        let one = StateVector::constant(mesh.n_dofs(), 1.0);
        let e2 = discrete_norms(&mesh, &[2.0, 3.0], &one, Norm::E2);
        assert!((e2 * e2 - 5.0).abs() < 1e-14);
        let c = StateVector::constant(mesh.n_dofs(), -2.5);
        assert_eq!(discrete_norms(&mesh, &[2.0, 3.0], &c, Norm::EInf), 2.5);

        let (mesh, fields) = single_edge(7);
        let u = interpolate(&mesh, |_, x| x).unwrap();
        let e2 = discrete_norms(&mesh, &[1.0], &u, Norm::E2);
        assert!((e2 * e2 - 1.0 / 3.0).abs() < 1e-14);
        let sys = assemble_form(&mesh, &fields, &zero_m(2)).unwrap();
        assert!((sys.mass_norm(&u) - e2).abs() < 1e-14);
    }

    fn random_system(seed: &[f64], n_int: usize) -> DiscreteSystem {
        let g = build_graph(4, &[(1, 2), (2, 3), (3, 1), (3, 4)]).unwrap();
        let mesh = build_mesh(&g, n_int).unwrap();
        let specs = (0..4)
            .map(|j| EdgeField {
                conductance: Profile::Function(ScalarFn::from_expr(
                    Expr::parse(&format!("1 + {} * x * x", seed[j])).unwrap(),
                )),
                potential: Profile::constant(seed[4 + j]),
                weight: 0.5 + seed[8 + j],
            })
            .collect();
        let fields = build_edge_fields(specs, &mesh).unwrap();
        // Laplacian-type M: symmetric, nonnegative off-diagonal, zero row sums, minus a diagonal
        let mut m = DMatrix::zeros(4, 4);
        for (i, k, w) in [(0, 1, seed[0]), (1, 2, seed[1]), (2, 3, seed[2]), (0, 3, seed[3])] {
            m[(i, k)] = w;
            m[(k, i)] = w;
            m[(i, i)] -= w;
            m[(k, k)] -= w;
        }
        m[(0, 0)] -= seed[5];
        assemble_form(&mesh, &fields, &VertexMatrix::new(m).unwrap()).unwrap()
    }

    proptest! {
        #[test]
        fn form_is_symmetric_and_accretive(seed in prop::collection::vec(0.0f64..2.0, 12), x in prop::collection::vec(-1.0f64..1.0, 4 * 5 + 4)) {
            let sys = random_system(&seed, 5);
            prop_assert!(sys.form().is_symmetric());
            prop_assert!(sys.mass().is_symmetric());
            let scale = sys.form().norm_inf() * x.iter().map(|v| v * v).sum::<f64>();
            prop_assert!(sys.form().quad_form(&x) >= -1e-12 * scale);
        }
    }

    #[test]
    fn constants_in_kernel_and_mass_balance() {
        let mut seed = vec![0.7; 12];
        for s in seed.iter_mut().skip(4).take(4) {
            *s = 0.0;
        }
        seed[5] = 0.0;
        let sys = random_system(&seed, 6);
        let one = vec![1.0; sys.n_dofs()];
        let k1 = sys.form().mul_vec(&one);
        assert!(k1.iter().all(|v| v.abs() < 1e-12), "{k1:?}");
        // 𝟙ᵀ A_form u = 0 for arbitrary u (symmetry + kernel)
        let u: Vec<f64> = (0..sys.n_dofs()).map(|i| (i as f64 * 0.37).sin()).collect();
        let s: f64 = sys.a_form().mul_vec(&u).iter().sum();
        assert!(s.abs() < 1e-10);
    }

    #[test]
    fn form_converges_at_second_order() {
        // 𝔞(u, v) with c = 1 + x, p = 2, μ = 1.5 on a single edge, M = 0:
        // u = sin(x), v = x² on [0,1]
        let exact = {
            // ∫ 1.5 (1+x) cos(x) 2x dx + ∫ 1.5·2 sin(x) x² dx, closed forms evaluated below
            let i1 = |x: f64| 2.0 * (x * x * x.sin() + 2.0 * x * x.cos() - 2.0 * x.sin()) + 2.0 * (x * x.sin() + x.cos());
            let i2 = |x: f64| 3.0 * (2.0 * x * x.sin() - (x * x - 2.0) * x.cos());
            1.5 * (i1(1.0) - i1(0.0)) + (i2(1.0) - i2(0.0))
        };
        let mut errs = Vec::new();
        for n_int in [7, 15, 31, 63] {
            let g = build_graph(2, &[(1, 2)]).unwrap();
            let mesh = build_mesh(&g, n_int).unwrap();
            let f = EdgeField {
                conductance: Profile::Function(ScalarFn::native(|_, x, _| 1.0 + x)),
                potential: Profile::constant(2.0),
                weight: 1.5,
            };
            let fields = build_edge_fields(vec![f], &mesh).unwrap();
            let sys = assemble_form(&mesh, &fields, &zero_m(2)).unwrap();
            let u = interpolate(&mesh, |_, x| x.sin()).unwrap();
            let v = interpolate(&mesh, |_, x| x * x).unwrap();
            let a = crate::linalg::dot(&sys.form().mul_vec(&u), &v);
            errs.push((a - exact).abs());
        }
        for w in errs.windows(2) {
            let order = (w[0] / w[1]).log2();
            assert!((order - 2.0).abs() < 0.25, "{errs:?}");
        }
    }
}
