//! Spectrum and action of the discrete semigroup `e^{tA_h}`, `A_h = −G⁻¹(S+K)`.
//!
//! The pencil `(−(S+K), G)` is symmetric-definite, so `A_h` has real
//! eigenvalues `λ_k` with `G`-orthonormal eigenvectors `v_k` and
//! `e^{tA_h}u = Σ_k e^{λ_k t} (v_kᵀ G u) v_k`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use serde::Serialize;

use crate::discretization::{DiscreteSystem, MassKind, StateVector};
use crate::error::{Error, Result};
use crate::linalg::{dot, SkylineCholesky};
use crate::report::ValidationReport;
use crate::solver::TrajectorySet;

/// Above this many dofs the default eigen route is shift-invert Lanczos.
pub const DENSE_LIMIT: usize = 5000;
pub const TOL_SPECTRAL: f64 = 1e-10;
pub const TOL_EINF: f64 = 1e-8;
pub const TOL_POSITIVITY: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EigenMethod {
    Dense,
    ShiftInvertLanczos,
}

#[derive(Debug, Clone)]
pub struct SpectralData {
    eigenvalues: Vec<f64>,
    eigenvectors: DMatrix<f64>,
    mass_kind: MassKind,
}

impl SpectralData {
    /// Descending `λ_1 ≥ λ_2 ≥ …`.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// `G`-orthonormal columns matching [`Self::eigenvalues`].
    pub fn eigenvectors(&self) -> &DMatrix<f64> {
        &self.eigenvectors
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn is_complete(&self) -> bool {
        self.eigenvectors.ncols() == self.eigenvectors.nrows()
    }

    pub fn mass_kind(&self) -> MassKind {
        self.mass_kind
    }

    /// `‖VᵀGV − I‖_max`
    pub fn orthonormality_defect(&self, sys: &DiscreteSystem) -> f64 {
        let gv = sys.mass().to_dense() * &self.eigenvectors;
        let gram = self.eigenvectors.transpose() * gv;
        (gram - DMatrix::identity(self.len(), self.len())).abs().max()
    }

    /// `V e^{tΛ} Vᵀ b`; with `b = G u` this is `e^{tA_h} u`.
    pub fn apply_to_load(&self, t: f64, b: &[f64]) -> Vec<f64> {
        let coeffs = self.eigenvectors.tr_mul(&DVector::from_column_slice(b));
        let scaled = DVector::from_iterator(
            self.len(),
            coeffs.iter().zip(&self.eigenvalues).map(|(c, l)| c * (l * t).exp()),
        );
        (&self.eigenvectors * scaled).as_slice().to_vec()
    }

    pub fn apply(&self, sys: &DiscreteSystem, t: f64, u0: &[f64]) -> StateVector {
        StateVector(self.apply_to_load(t, &sys.mass().mul_vec(u0)))
    }

    /// Dense `e^{tA_h} = V e^{tΛ} Vᵀ G`.
    pub fn propagator(&self, sys: &DiscreteSystem, t: f64) -> DMatrix<f64> {
        let mut ve = self.eigenvectors.clone();
        for (k, mut col) in ve.column_iter_mut().enumerate() {
            col *= (self.eigenvalues[k] * t).exp();
        }
        let vtg = self.eigenvectors.transpose() * sys.mass().to_dense();
        ve * vtg
    }
}

/// The `count` eigenpairs of largest eigenvalue of `−(S+K)v = λGv`.
pub fn generalized_eigs(sys: &DiscreteSystem, count: usize) -> Result<SpectralData> {
    let method = if sys.n_dofs() <= DENSE_LIMIT { EigenMethod::Dense } else { EigenMethod::ShiftInvertLanczos };
    generalized_eigs_with(sys, count, method)
}

pub fn generalized_eigs_with(sys: &DiscreteSystem, count: usize, method: EigenMethod) -> Result<SpectralData> {
    let n = sys.n_dofs();
    if count == 0 || count > n {
        return Err(Error::InvalidParameter(format!("eigenpair count {count} must lie in 1..={n}")));
    }
    match method {
        EigenMethod::Dense => dense_eigs(sys, count),
        EigenMethod::ShiftInvertLanczos => lanczos_eigs(sys, count),
    }
}

fn dense_eigs(sys: &DiscreteSystem, count: usize) -> Result<SpectralData> {
    let l = SkylineCholesky::factor(sys.mass())?.to_dense_lower();
    let f = sys.form().to_dense();
    let x = l.solve_lower_triangular(&f).ok_or_else(|| Error::LinearSolveFailure("singular mass factor".into()))?;
    let c = l
        .solve_lower_triangular(&x.transpose())
        .ok_or_else(|| Error::LinearSolveFailure("singular mass factor".into()))?;
    let c = (&c + c.transpose()) * 0.5;
    let eig = SymmetricEigen::new(c);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    order.truncate(count);
    let w = DMatrix::from_columns(&order.iter().map(|&k| eig.eigenvectors.column(k)).collect::<Vec<_>>());
    let v = l
        .transpose()
        .solve_upper_triangular(&w)
        .ok_or_else(|| Error::LinearSolveFailure("singular mass factor".into()))?;
    Ok(SpectralData {
        eigenvalues: order.iter().map(|&k| -eig.eigenvalues[k]).collect(),
        eigenvectors: v,
        mass_kind: sys.mass_kind(),
    })
}

/// Lanczos on `(F + σG)⁻¹G` in the `G` inner product with full
/// reorthogonalization; the extreme Ritz values `θ` give `ν = 1/θ − σ`.
fn lanczos_eigs(sys: &DiscreteSystem, count: usize) -> Result<SpectralData> {
    const SIGMA: f64 = 1.0;
    let n = sys.n_dofs();
    let g = sys.mass();
    let shifted = sys.form().combine(1.0, g, SIGMA);
    let solver = SkylineCholesky::factor(&shifted)?;
    let op = |x: &[f64]| solver.solve(&g.mul_vec(x));
    let g_dot = |a: &[f64], b: &[f64]| dot(a, &g.mul_vec(b));

    let mut steps = (2 * count + 20).max(40).min(n);
    loop {
        let mut q0: Vec<f64> = (0..n).map(|i| 0.5 + ((i as f64 + 1.0) * 0.618_033_988_749_895).fract()).collect();
        let nrm = g_dot(&q0, &q0).sqrt();
        q0.iter_mut().for_each(|v| *v /= nrm);
        let mut basis: Vec<Vec<f64>> = vec![q0];
        let mut alpha = Vec::new();
        let mut beta: Vec<f64> = Vec::new();
        for j in 0..steps {
            let mut w = op(&basis[j]);
            let a = g_dot(&basis[j], &w);
            alpha.push(a);
            for _ in 0..2 {
                for q in &basis {
                    let c = g_dot(q, &w);
                    w.iter_mut().zip(q).for_each(|(wi, qi)| *wi -= c * qi);
                }
            }
            let b = g_dot(&w, &w).max(0.0).sqrt();
            if j + 1 == steps || b <= 1e-14 * a.abs().max(1e-300) {
                beta.push(b);
                break;
            }
            beta.push(b);
            w.iter_mut().for_each(|v| *v /= b);
            basis.push(w);
        }
        let m = alpha.len();
        let mut t = DMatrix::zeros(m, m);
        for i in 0..m {
            t[(i, i)] = alpha[i];
            if i + 1 < m {
                t[(i, i + 1)] = beta[i];
                t[(i + 1, i)] = beta[i];
            }
        }
        let eig = SymmetricEigen::new(t);
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let have = order.len().min(count);
        let last_beta = beta[m - 1];
        let converged = order[..have]
            .iter()
            .all(|&k| (last_beta * eig.eigenvectors[(m - 1, k)]).abs() <= 1e-10 * eig.eigenvalues[k].abs());
        if (converged && have == count) || m == n || steps == n {
            if have < count {
                return Err(Error::IncompleteSpectrum { have, need: count });
            }
            let mut vecs = DMatrix::zeros(n, count);
            let mut eigenvalues = Vec::with_capacity(count);
            for (c, &k) in order[..count].iter().enumerate() {
                let theta = eig.eigenvalues[k];
                eigenvalues.push(-(1.0 / theta - SIGMA));
                for (q, s) in basis.iter().zip(eig.eigenvectors.column(k).iter()) {
                    for i in 0..n {
                        vecs[(i, c)] += s * q[i];
                    }
                }
            }
            return Ok(SpectralData { eigenvalues, eigenvectors: vecs, mass_kind: sys.mass_kind() });
        }
        steps = (2 * steps).min(n);
    }
}

/// Full spectral decomposition, reusable across many times.
#[derive(Debug, Clone)]
pub struct Semigroup {
    spectral: SpectralData,
}

impl Semigroup {
    pub fn new(sys: &DiscreteSystem) -> Result<Self> {
        let spectral = generalized_eigs_with(sys, sys.n_dofs(), EigenMethod::Dense)?;
        Ok(Self { spectral })
    }

    pub fn from_spectral(spectral: SpectralData) -> Result<Self> {
        if !spectral.is_complete() {
            return Err(Error::IncompleteSpectrum { have: spectral.len(), need: spectral.eigenvectors.nrows() });
        }
        Ok(Self { spectral })
    }

    pub fn spectral(&self) -> &SpectralData {
        &self.spectral
    }

    pub fn apply(&self, sys: &DiscreteSystem, t: f64, u0: &[f64]) -> StateVector {
        self.spectral.apply(sys, t, u0)
    }

    pub fn propagator(&self, sys: &DiscreteSystem, t: f64) -> DMatrix<f64> {
        self.spectral.propagator(sys, t)
    }
}

/// `e^{tA_h}u0` by full spectral expansion.
pub fn semigroup_apply(sys: &DiscreteSystem, t: f64, u0: &[f64]) -> Result<StateVector> {
    Ok(Semigroup::new(sys)?.apply(sys, t, u0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ContractionNorm {
    E2,
    EInf,
}

fn propagator_label(kind: MassKind) -> &'static str {
    match kind {
        MassKind::Consistent => "consistent-mass propagator",
        MassKind::Lumped => "lumped-mass propagator",
    }
}

fn max_abs_row_sum(p: &DMatrix<f64>) -> f64 {
    p.row_iter().map(|r| r.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max)
}

/// Contraction certificate. `E2` uses the spectral bound `λ_1 ≤ tol` (which
/// bounds the `G`-norm of `e^{tA_h}` for every `t`); `EInf` forms the dense
/// propagator of the given system and checks its max absolute row sum.
pub fn check_contraction(sys: &DiscreteSystem, t_grid: &[f64], norm: ContractionNorm) -> Result<ValidationReport> {
    let mut report = ValidationReport::new(match norm {
        ContractionNorm::E2 => "contraction_e2",
        ContractionNorm::EInf => "contraction_einf",
    });
    match norm {
        ContractionNorm::E2 => {
            let eig = generalized_eigs(sys, 1)?;
            let l1 = eig.eigenvalues()[0];
            report.push("spectral_bound", l1 <= TOL_SPECTRAL, l1, TOL_SPECTRAL).note =
                Some(propagator_label(sys.mass_kind()).into());
        }
        ContractionNorm::EInf => {
            let sg = Semigroup::new(sys)?;
            let norms: Vec<f64> = t_grid.par_iter().map(|&t| max_abs_row_sum(&sg.propagator(sys, t))).collect();
            for (&t, &nrm) in t_grid.iter().zip(&norms) {
                report.push(&format!("einf_norm_t{t}"), nrm <= 1.0 + TOL_EINF, nrm, 1.0 + TOL_EINF).note =
                    Some(propagator_label(sys.mass_kind()).into());
            }
        }
    }
    Ok(report)
}

/// Entrywise nonnegativity of the lumped-mass propagator on `t_grid`.
pub fn check_positivity(sys: &DiscreteSystem, t_grid: &[f64]) -> Result<ValidationReport> {
    let lumped = sys.with_lumped_mass();
    let sg = Semigroup::new(&lumped)?;
    let mut report = ValidationReport::new("positivity");
    let mins: Vec<f64> = t_grid.par_iter().map(|&t| sg.propagator(&lumped, t).min()).collect();
    for (&t, &min) in t_grid.iter().zip(&mins) {
        report.push(&format!("min_entry_t{t}"), min >= -TOL_POSITIVITY, min, -TOL_POSITIVITY).note =
            Some(propagator_label(MassKind::Lumped).into());
    }
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum HeatMethod {
    #[default]
    BackwardEuler,
    Spectral,
}

/// Deterministic march of `u̇ = A_h u` on `[0, T]`, one snapshot per step.
pub fn solve_heat(sys: &DiscreteSystem, u0: &[f64], t_end: f64, dt: f64, method: HeatMethod) -> Result<TrajectorySet> {
    if !(dt > 0.0) || !(t_end >= 0.0) {
        return Err(Error::InvalidParameter(format!("need dt > 0 and T >= 0, got dt = {dt}, T = {t_end}")));
    }
    let steps = (t_end / dt).round() as usize;
    let mut set = TrajectorySet::new(0, 0);
    set.push(0.0, StateVector(u0.to_vec()));
    match method {
        HeatMethod::BackwardEuler => {
            let lhs = SkylineCholesky::factor(&sys.mass().combine(1.0, sys.form(), dt))?;
            let mut u = u0.to_vec();
            for n in 1..=steps {
                let mut rhs = sys.mass().mul_vec(&u);
                lhs.solve_in_place(&mut rhs);
                u = rhs;
                set.push(n as f64 * dt, StateVector(u.clone()));
            }
        }
        HeatMethod::Spectral => {
            let sg = Semigroup::new(sys)?;
            let b = sys.mass().mul_vec(u0);
            for n in 1..=steps {
                let t = n as f64 * dt;
                set.push(t, StateVector(sg.spectral().apply_to_load(t, &b)));
            }
        }
    }
    Ok(set)
}

/// Solves `(S+K)u = G s`, the steady state of `u̇ = A_h u + s`. Requires
/// `S+K` positive definite (some `p > 0` or a definite `M`).
pub fn steady_state(sys: &DiscreteSystem, source: &[f64]) -> Result<StateVector> {
    let f = SkylineCholesky::factor(sys.form())?;
    Ok(StateVector(f.solve(&sys.mass().mul_vec(source))))
}
