//! Per-edge coefficient data: conductances `c_j`, potentials `p_j`, weights
//! `μ_j`, polynomial drifts `f_j` and diffusion coefficients `g_j`.
//!
//! Analytic hypotheses (positivity, coefficient bounds, vertex compatibility,
//! local Lipschitz continuity) are sampled on a lattice rather than proven.

use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::discretization::Mesh;
use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::graph::MetricGraph;
use crate::report::ValidationReport;

type NativeFn = dyn Fn(f64, f64, f64) -> f64 + Send + Sync;

/// A scalar function of `(t, x, u)`; most coefficients ignore some arguments.
#[derive(Clone)]
pub enum ScalarFn {
    Const(f64),
    Expr(Arc<Expr>),
    Native(Arc<NativeFn>),
    Offset(Arc<ScalarFn>, f64),
}

impl ScalarFn {
    pub fn native(f: impl Fn(f64, f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        ScalarFn::Native(Arc::new(f))
    }

    /// Folds constant expressions to [`ScalarFn::Const`].
    pub fn from_expr(e: Expr) -> Self {
        match e.as_constant() {
            Some(v) => ScalarFn::Const(v),
            None => ScalarFn::Expr(Arc::new(e)),
        }
    }

    #[inline]
    pub fn eval(&self, t: f64, x: f64, u: f64) -> f64 {
        match self {
            ScalarFn::Const(v) => *v,
            ScalarFn::Expr(e) => e.eval(t, x, u),
            ScalarFn::Native(f) => f(t, x, u),
            ScalarFn::Offset(f, c) => f.eval(t, x, u) + c,
        }
    }

    pub fn constant(&self) -> Option<f64> {
        match self {
            ScalarFn::Const(v) => Some(*v),
            ScalarFn::Offset(f, c) => f.constant().map(|v| v + c),
            _ => None,
        }
    }

    pub fn shifted(&self, c: f64) -> ScalarFn {
        match self.constant() {
            Some(v) => ScalarFn::Const(v + c),
            None => ScalarFn::Offset(Arc::new(self.clone()), c),
        }
    }
}

impl fmt::Debug for ScalarFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScalarFn::Const(v) => write!(f, "Const({v})"),
            ScalarFn::Expr(e) => write!(f, "Expr({e})"),
            ScalarFn::Native(_) => f.write_str("Native(..)"),
            ScalarFn::Offset(g, c) => write!(f, "Offset({g:?}, {c})"),
        }
    }
}

impl From<f64> for ScalarFn {
    fn from(v: f64) -> Self {
        ScalarFn::Const(v)
    }
}

/// A spatial profile on one edge: a function of `x` or nodal samples on the
/// uniform mesh (endpoints included), linearly interpolated.
#[derive(Debug, Clone)]
pub enum Profile {
    Function(ScalarFn),
    Nodal(Vec<f64>),
}

impl Profile {
    pub fn constant(v: f64) -> Self {
        Profile::Function(ScalarFn::Const(v))
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Profile::Function(f) => f.eval(0.0, x, 0.0),
            Profile::Nodal(v) => {
                let cells = (v.len() - 1) as f64;
                let s = (x.clamp(0.0, 1.0) * cells).min(cells);
                let i = (s.floor() as usize).min(v.len() - 2);
                let w = s - i as f64;
                (1.0 - w) * v[i] + w * v[i + 1]
            }
        }
    }

    pub fn shifted(&self, c: f64) -> Profile {
        match self {
            Profile::Function(f) => Profile::Function(f.shifted(c)),
            Profile::Nodal(v) => Profile::Nodal(v.iter().map(|a| a + c).collect()),
        }
    }

    pub fn as_constant(&self) -> Option<f64> {
        match self {
            Profile::Function(f) => f.constant(),
            Profile::Nodal(_) => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EdgeField {
    pub conductance: Profile,
    pub potential: Profile,
    pub weight: f64,
}

impl EdgeField {
    pub fn uniform(c: f64, p: f64, mu: f64) -> Self {
        Self { conductance: Profile::constant(c), potential: Profile::constant(p), weight: mu }
    }
}

/// Validated per-edge `c_j`, `p_j`, `μ_j`.
#[derive(Debug, Clone)]
pub struct EdgeFieldSet {
    edges: Vec<EdgeField>,
}

/// Validates conductance positivity, potential nonnegativity and weight
/// positivity at every mesh node and every Gauss point of the assembly mesh.
pub fn build_edge_fields(specs: Vec<EdgeField>, mesh: &Mesh) -> Result<EdgeFieldSet> {
    let m = mesh.graph().n_edges();
    if specs.len() != m {
        return Err(Error::DimensionMismatch { expected: m, found: specs.len() });
    }
    let nodes = mesh.interior_nodes() + 2;
    for (j, f) in specs.iter().enumerate() {
        for prof in [&f.conductance, &f.potential] {
            if let Profile::Nodal(v) = prof {
                if v.len() != nodes {
                    return Err(Error::DimensionMismatch { expected: nodes, found: v.len() });
                }
            }
        }
        if !(f.weight > 0.0) {
            return Err(Error::NonpositiveWeight { edge: j + 1, value: f.weight });
        }
        for x in mesh.sample_points() {
            let c = f.conductance.eval(x);
            if !(c > 0.0) {
                return Err(Error::NonpositiveConductance { edge: j + 1, x, value: c });
            }
            let p = f.potential.eval(x);
            if !(p >= 0.0) {
                return Err(Error::NegativePotential { edge: j + 1, x, value: p });
            }
        }
    }
    Ok(EdgeFieldSet { edges: specs })
}

impl EdgeFieldSet {
    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edge(&self, j: usize) -> &EdgeField {
        &self.edges[j]
    }

    pub fn conductance(&self, j: usize, x: f64) -> f64 {
        self.edges[j].conductance.eval(x)
    }

    pub fn potential(&self, j: usize, x: f64) -> f64 {
        self.edges[j].potential.eval(x)
    }

    pub fn weight(&self, j: usize) -> f64 {
        self.edges[j].weight
    }

    pub fn weights(&self) -> Vec<f64> {
        self.edges.iter().map(|e| e.weight).collect()
    }

    /// Adds a constant `shift[j]` to every potential, keeping `p_j ≥ 0` when all shifts are ≥ 0.
    pub fn with_potential_shift(&self, shift: &[f64]) -> EdgeFieldSet {
        let edges = self
            .edges
            .iter()
            .zip(shift)
            .map(|(e, &s)| EdgeField { potential: e.potential.shifted(s), ..e.clone() })
            .collect();
        EdgeFieldSet { edges }
    }
}

/// Sampling lattice over `[0, t_end] × [0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Lattice {
    pub t_end: f64,
    pub t_points: usize,
    pub x_points: usize,
}

impl Lattice {
    pub fn new(t_end: f64) -> Self {
        Self { t_end, t_points: 64, x_points: 64 }
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        let n = self.t_points.max(1);
        (0..n).map(move |i| if n == 1 { 0.0 } else { self.t_end * i as f64 / (n - 1) as f64 })
    }

    pub fn xs(&self) -> impl Iterator<Item = f64> + '_ {
        let n = self.x_points.max(2);
        (0..n).map(move |i| i as f64 / (n - 1) as f64)
    }
}

/// Polynomial drift `f_j(t,x,η) = −a_{j,2k+1} η^{2k+1} + Σ_{l≤2k} a_{j,l} η^l`.
///
/// `coefficients[j][l]` holds `a_{j,l}` for `l = 0..=2k+1`; the leading entry
/// is stored positive and enters with a minus sign.
#[derive(Debug, Clone)]
pub struct DriftSpec {
    k: usize,
    coefficients: Vec<Vec<ScalarFn>>,
    pub lower_bound: f64,
    pub upper_bound: f64,
}

impl DriftSpec {
    pub fn new(k: usize, coefficients: Vec<Vec<ScalarFn>>, lower_bound: f64, upper_bound: f64) -> Result<Self> {
        if let Some(row) = coefficients.iter().find(|r| r.len() != 2 * k + 2) {
            return Err(Error::DimensionMismatch { expected: 2 * k + 2, found: row.len() });
        }
        if !(lower_bound > 0.0 && upper_bound >= lower_bound) {
            return Err(Error::InvalidParameter(format!(
                "drift bounds need 0 < c_lo <= C_hi, got {lower_bound}, {upper_bound}"
            )));
        }
        Ok(Self { k, coefficients, lower_bound, upper_bound })
    }

    /// Same constant coefficients `a_l` on every edge (`a[l]`, `l = 0..=2k+1`).
    pub fn constant(k: usize, a: &[f64], n_edges: usize, lower_bound: f64, upper_bound: f64) -> Result<Self> {
        let row: Vec<ScalarFn> = a.iter().map(|&v| ScalarFn::Const(v)).collect();
        Self::new(k, vec![row; n_edges], lower_bound, upper_bound)
    }

    pub fn degree_parameter(&self) -> usize {
        self.k
    }

    pub fn n_edges(&self) -> usize {
        self.coefficients.len()
    }

    pub fn coefficient(&self, j: usize, l: usize) -> &ScalarFn {
        &self.coefficients[j][l]
    }

    #[inline]
    pub fn eval(&self, t: f64, x: f64, j: usize, eta: f64) -> f64 {
        let a = &self.coefficients[j];
        let top = a.len() - 1;
        let mut acc = -a[top].eval(t, x, 0.0);
        for l in (0..top).rev() {
            acc = acc * eta + a[l].eval(t, x, 0.0);
        }
        acc
    }
}

/// Convenience wrapper matching the operation table.
pub fn eval_drift(d: &DriftSpec, t: f64, x: f64, j: usize, eta: f64) -> f64 {
    d.eval(t, x, j, eta)
}

/// Checks the coefficient bounds and the vertex compatibility of the drift on
/// a lattice. Compatibility is required for `l = 1..=2k+1`.
pub fn validate_drift(d: &DriftSpec, graph: &MetricGraph, lattice: &Lattice) -> Result<ValidationReport> {
    let m = graph.n_edges();
    if d.n_edges() != m {
        return Err(Error::DimensionMismatch { expected: m, found: d.n_edges() });
    }
    let top = 2 * d.k + 1;
    let mut lead_min = f64::INFINITY;
    let mut lead_max = f64::NEG_INFINITY;
    let mut lower_max = 0.0f64;
    for j in 0..m {
        for t in lattice.times() {
            for x in lattice.xs() {
                let lead = d.coefficients[j][top].eval(t, x, 0.0);
                lead_min = lead_min.min(lead);
                lead_max = lead_max.max(lead);
                for l in 0..top {
                    lower_max = lower_max.max(d.coefficients[j][l].eval(t, x, 0.0).abs());
                }
            }
        }
    }
    let mut mismatch = 0.0f64;
    for v in 0..graph.n_vertices() {
        let ends: Vec<(usize, f64)> = graph
            .incident_edges(v)
            .iter()
            .map(|&j| (j, if graph.edge(j).start == v { 0.0 } else { 1.0 }))
            .collect();
        for t in lattice.times() {
            for l in 1..=top {
                let vals: Vec<f64> = ends.iter().map(|&(j, x)| d.coefficients[j][l].eval(t, x, 0.0)).collect();
                let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                if vals.len() > 1 {
                    mismatch = mismatch.max(hi - lo);
                }
            }
        }
    }
    let mut r = ValidationReport::new(format!(
        "drift k={} lattice {}x{} on [0,{}]",
        d.k, lattice.t_points, lattice.x_points, lattice.t_end
    ));
    r.push("leading_lower_bound", lead_min >= d.lower_bound, lead_min, d.lower_bound);
    r.push("leading_upper_bound", lead_max <= d.upper_bound, lead_max, d.upper_bound);
    r.push("coefficient_bound", lower_max <= d.upper_bound, lower_max, d.upper_bound);
    r.push("vertex_compatibility", mismatch <= 1e-12, mismatch, 1e-12);
    Ok(r)
}

/// Diffusion coefficients `g_j(t, x, η)` with declared regularity metadata.
#[derive(Debug, Clone)]
pub struct DiffusionSpec {
    pub functions: Vec<ScalarFn>,
    /// `(r, L^(r))`: Lipschitz constant on `|η| ≤ r`.
    pub lipschitz: Vec<(f64, f64)>,
    /// `c′` in `|g| ≤ c′(1 + |η|)`.
    pub growth: Option<f64>,
}

impl DiffusionSpec {
    pub fn new(functions: Vec<ScalarFn>) -> Self {
        Self { functions, lipschitz: Vec::new(), growth: None }
    }

    pub fn additive(value: f64, n_edges: usize) -> Self {
        Self { functions: vec![ScalarFn::Const(value); n_edges], lipschitz: vec![(f64::INFINITY, 0.0)], growth: Some(value.abs()) }
    }

    pub fn zero(n_edges: usize) -> Self {
        Self::additive(0.0, n_edges)
    }

    pub fn is_zero(&self) -> bool {
        self.functions.iter().all(|g| g.constant() == Some(0.0))
    }

    #[inline]
    pub fn eval(&self, t: f64, x: f64, j: usize, eta: f64) -> f64 {
        self.functions[j].eval(t, x, eta)
    }
}

pub fn eval_diffusion(g: &DiffusionSpec, t: f64, x: f64, j: usize, eta: f64) -> f64 {
    g.eval(t, x, j, eta)
}

/// Finite-difference slope scan and growth check of the diffusion on
/// `lattice × [−r, r]` with `eta_points` state samples per radius.
pub fn validate_diffusion(g: &DiffusionSpec, lattice: &Lattice, eta_points: usize) -> ValidationReport {
    let mut r = ValidationReport::new("diffusion");
    let eta_points = eta_points.max(2);
    for &(radius, bound) in &g.lipschitz {
        let rad = if radius.is_finite() { radius } else { 100.0 };
        let etas: Vec<f64> = (0..eta_points).map(|i| -rad + 2.0 * rad * i as f64 / (eta_points - 1) as f64).collect();
        let mut slope = 0.0f64;
        for gj in &g.functions {
            for t in lattice.times() {
                for x in lattice.xs() {
                    for w in etas.windows(2) {
                        let s = (gj.eval(t, x, w[1]) - gj.eval(t, x, w[0])).abs() / (w[1] - w[0]);
                        slope = slope.max(s);
                    }
                }
            }
        }
        let tol = bound * (1.0 + 1e-9) + 1e-12;
        r.push(&format!("lipschitz_r{radius}"), slope <= tol, slope, bound);
    }
    if let Some(c) = g.growth {
        let mut worst = 0.0f64;
        let etas: Vec<f64> = (0..eta_points).map(|i| -100.0 + 200.0 * i as f64 / (eta_points - 1) as f64).collect();
        for gj in &g.functions {
            for t in lattice.times() {
                for x in lattice.xs() {
                    for &e in &etas {
                        worst = worst.max(gj.eval(t, x, e).abs() / (1.0 + e.abs()));
                    }
                }
            }
        }
        r.push("linear_growth", worst <= c * (1.0 + 1e-12), worst, c);
    }
    r
}

/// Allen–Cahn data: wells `β_j`, common `β = max β_j`, `ϱ_j = β² − β_j²`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AllenCahnSpec {
    pub betas: Vec<f64>,
    pub beta: f64,
    pub rho: Vec<f64>,
}

impl AllenCahnSpec {
    pub fn new(betas: &[f64]) -> Result<Self> {
        if betas.is_empty() {
            return Err(Error::EmptyEdgeList);
        }
        if let Some((j, &b)) = betas.iter().enumerate().find(|(_, &b)| !(b > 0.0)) {
            return Err(Error::NonpositiveBeta { edge: j + 1, value: b });
        }
        let beta = betas.iter().copied().fold(0.0, f64::max);
        let rho = betas.iter().map(|b| beta * beta - b * b).collect();
        Ok(Self { betas: betas.to_vec(), beta, rho })
    }

    /// `f(η) = −η³ + β²η`
    pub fn drift(&self, eta: f64) -> f64 {
        -eta * eta * eta + self.beta * self.beta * eta
    }

    /// Double-well potential `H(η) = ¼(η² − β²)²` with `f = −H′`.
    pub fn potential(&self, eta: f64) -> f64 {
        double_well(eta, self.beta)
    }
}

pub fn double_well(eta: f64, beta: f64) -> f64 {
    let s = eta * eta - beta * beta;
    0.25 * s * s
}

/// Builds the Allen–Cahn rewrite: common drift `−η³ + β²η` (k = 1, constant
/// coefficients) and potentials `p̃_j = p_j + ϱ_j`.
pub fn allen_cahn_drift(betas: &[f64], base: &EdgeFieldSet) -> Result<(DriftSpec, EdgeFieldSet)> {
    if betas.len() != base.n_edges() {
        return Err(Error::DimensionMismatch { expected: base.n_edges(), found: betas.len() });
    }
    let ac = AllenCahnSpec::new(betas)?;
    let b2 = ac.beta * ac.beta;
    let drift = DriftSpec::constant(1, &[0.0, b2, 0.0, 1.0], betas.len(), 1.0, b2.max(1.0))?;
    Ok((drift, base.with_potential_shift(&ac.rho)))
}

/// Estimates `a″` in `(f(u+v) − f(v))·sign(u) ≤ a″(1+|v|)^m′ − b″|u|^m′` by a
/// grid search over `u, v ∈ [−range, range]` for a given `b″`.
pub fn dissipativity_constant(
    f: impl Fn(f64) -> f64,
    exponent: i32,
    b: f64,
    range: f64,
    points: usize,
) -> f64 {
    let grid: Vec<f64> = (0..points).map(|i| -range + 2.0 * range * i as f64 / (points - 1) as f64).collect();
    let mut a = f64::NEG_INFINITY;
    for &u in &grid {
        for &v in &grid {
            let lhs = if u == 0.0 { 0.0 } else { (f(u + v) - f(v)) * u.signum() };
            let need = (lhs + b * u.abs().powi(exponent)) / (1.0 + v.abs()).powi(exponent);
            a = a.max(need);
        }
    }
    a.max(0.0)
}
