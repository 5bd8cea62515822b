//! Semi-implicit Euler–Maruyama stepping of
//! `G du = −(S+K)u dt + G F(t,u) dt + Γ(t,u) dW`.
//!
//! One step solves `(G + Δt(S+K)) u⁺ = G(u + Δt F̃) + Γ(t,u) ΔW`, where `F̃` is
//! the nodal drift, tamed as `F/(1 + Δt^α ‖F‖_∞)` by default. The exponential
//! variant replaces the linear solve by `V e^{ΔtΛ} Vᵀ` applied to the same
//! right-hand side. Drift and diffusion at a vertex dof are averaged over the
//! incident edges.

use serde::{Deserialize, Serialize};

use crate::coefficients::{double_well, DiffusionSpec, DriftSpec};
use crate::discretization::{DiscreteSystem, MassKind, StateVector};
use crate::error::{Error, Result};
use crate::linalg::{max_abs, SkylineCholesky};
use crate::noise::{NoiseModel, NoiseSampler};
use crate::semigroup::{Semigroup, SpectralData};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    #[default]
    SemiImplicitTamed,
    SemiImplicitPlain,
    ExponentialEuler,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub dt: f64,
    pub t_end: f64,
    pub scheme: Scheme,
    pub taming_exponent: f64,
    pub snapshot_stride: usize,
    pub blowup_guard: f64,
}

impl SolverConfig {
    pub fn new(dt: f64, t_end: f64) -> Result<Self> {
        let cfg = Self { dt, t_end, scheme: Scheme::default(), taming_exponent: 1.0, snapshot_stride: 1, blowup_guard: 1e6 };
        cfg.n_steps()?;
        Ok(cfg)
    }

    pub fn with_scheme(mut self, scheme: Scheme) -> Self {
        self.scheme = scheme;
        self
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.snapshot_stride = stride.max(1);
        self
    }

    /// `T/Δt`, which must be an integer up to rounding.
    pub fn n_steps(&self) -> Result<usize> {
        if !(self.dt > 0.0 && self.dt <= self.t_end) {
            return Err(Error::InvalidParameter(format!("need 0 < dt <= T, got dt = {}, T = {}", self.dt, self.t_end)));
        }
        let ratio = self.t_end / self.dt;
        let steps = ratio.round();
        if (ratio - steps).abs() > 1e-9 * ratio.max(1.0) {
            return Err(Error::InvalidParameter(format!("T/dt = {ratio} is not an integer")));
        }
        Ok(steps as usize)
    }
}

/// Snapshots of one sample path.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectorySet {
    pub trajectory_id: u64,
    pub seed: u64,
    pub config_hash: Option<String>,
    times: Vec<f64>,
    states: Vec<StateVector>,
    sup_norm: f64,
}

impl TrajectorySet {
    pub fn new(trajectory_id: u64, seed: u64) -> Self {
        Self { trajectory_id, seed, config_hash: None, times: Vec::new(), states: Vec::new(), sup_norm: 0.0 }
    }

    pub fn push(&mut self, t: f64, state: StateVector) {
        self.observe(&state);
        self.times.push(t);
        self.states.push(state);
    }

    /// Updates the running sup norm without storing a snapshot.
    pub fn observe(&mut self, state: &[f64]) {
        self.sup_norm = self.sup_norm.max(max_abs(state));
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn states(&self) -> &[StateVector] {
        &self.states
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn final_state(&self) -> Option<&StateVector> {
        self.states.last()
    }

    /// `sup_t ‖u(t)‖_∞` over every step, not only the stored snapshots.
    pub fn sup_norm(&self) -> f64 {
        self.sup_norm
    }
}

/// Per-dof `(edge, x)` positions used for nodal drift and diffusion values.
fn nodal_average(nodes: &[(usize, f64)], f: impl Fn(usize, f64) -> f64) -> f64 {
    match nodes {
        [(j, x)] => f(*j, *x),
        _ => nodes.iter().map(|&(j, x)| f(j, x)).sum::<f64>() / nodes.len() as f64,
    }
}

pub fn nodal_drift(sys: &DiscreteSystem, drift: &DriftSpec, t: f64, u: &[f64], out: &mut [f64]) {
    for ((o, &ua), nodes) in out.iter_mut().zip(u).zip(sys.node_incidences()) {
        *o = nodal_average(nodes, |j, x| drift.eval(t, x, j, ua));
    }
}

pub fn nodal_diffusion(sys: &DiscreteSystem, diffusion: &DiffusionSpec, t: f64, u: &[f64], out: &mut [f64]) {
    for ((o, &ua), nodes) in out.iter_mut().zip(u).zip(sys.node_incidences()) {
        *o = nodal_average(nodes, |j, x| diffusion.eval(t, x, j, ua));
    }
}

#[derive(Debug, Clone)]
enum Propagation {
    Implicit(SkylineCholesky),
    Spectral(SpectralData),
}

/// Precomputed one-step map for a fixed `Δt`.
#[derive(Debug, Clone)]
pub struct Stepper<'a> {
    sys: &'a DiscreteSystem,
    drift: Option<&'a DriftSpec>,
    diffusion: &'a DiffusionSpec,
    scheme: Scheme,
    dt: f64,
    taming_exponent: f64,
    propagation: Propagation,
}

impl<'a> Stepper<'a> {
    pub fn new(
        sys: &'a DiscreteSystem,
        drift: Option<&'a DriftSpec>,
        diffusion: &'a DiffusionSpec,
        scheme: Scheme,
        dt: f64,
        taming_exponent: f64,
    ) -> Result<Self> {
        let propagation = match scheme {
            Scheme::ExponentialEuler => Propagation::Spectral(Semigroup::new(sys)?.spectral().clone()),
            _ => {
                let lhs = sys.mass().combine(1.0, sys.form(), dt);
                Propagation::Implicit(
                    SkylineCholesky::factor(&lhs).map_err(|e| Error::LinearSolveFailure(e.to_string()))?,
                )
            }
        };
        Ok(Self { sys, drift, diffusion, scheme, dt, taming_exponent, propagation })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Advances `u` from `t` to `t + Δt` with load increment `dw`.
    pub fn step(&self, t: f64, u: &mut [f64], dw: Option<&[f64]>) -> Result<()> {
        let n = u.len();
        let mut v = u.to_vec();
        if let Some(drift) = self.drift {
            let mut f = vec![0.0; n];
            nodal_drift(self.sys, drift, t, u, &mut f);
            let scale = match self.scheme {
                Scheme::SemiImplicitPlain => self.dt,
                _ => self.dt / (1.0 + self.dt.powf(self.taming_exponent) * max_abs(&f)),
            };
            v.iter_mut().zip(&f).for_each(|(vi, fi)| *vi += scale * fi);
        }
        let mut rhs = self.sys.mass().mul_vec(&v);
        if let Some(dw) = dw {
            let mut g = vec![0.0; n];
            nodal_diffusion(self.sys, self.diffusion, t, u, &mut g);
            rhs.iter_mut().zip(g.iter().zip(dw)).for_each(|(r, (gi, wi))| *r += gi * wi);
        }
        match &self.propagation {
            Propagation::Implicit(f) => {
                f.solve_in_place(&mut rhs);
                u.copy_from_slice(&rhs);
            }
            Propagation::Spectral(s) => u.copy_from_slice(&s.apply_to_load(self.dt, &rhs)),
        }
        if u.iter().any(|x| !x.is_finite()) {
            return Err(Error::LinearSolveFailure("non-finite state after step".into()));
        }
        Ok(())
    }
}

/// A single step built from scratch; prefer [`Stepper`] inside loops.
pub fn em_step(
    u: &StateVector,
    t: f64,
    dt: f64,
    sys: &DiscreteSystem,
    drift: Option<&DriftSpec>,
    diffusion: &DiffusionSpec,
    scheme: Scheme,
    dw: &[f64],
) -> Result<StateVector> {
    let stepper = Stepper::new(sys, drift, diffusion, scheme, dt, 1.0)?;
    let mut out = u.clone();
    stepper.step(t, &mut out, Some(dw))?;
    Ok(out)
}

/// Full description of a stochastic run.
#[derive(Debug, Clone)]
pub struct Run {
    pub system: DiscreteSystem,
    pub drift: Option<DriftSpec>,
    pub diffusion: DiffusionSpec,
    pub noise: NoiseModel,
    pub solver: SolverConfig,
    pub initial: StateVector,
    pub seed: u64,
    pub config_hash: Option<String>,
}

impl Run {
    pub fn with_solver(&self, solver: SolverConfig) -> Run {
        Run { solver, ..self.clone() }
    }
}

/// Shared, immutable per-run setup; paths can be generated concurrently.
#[derive(Debug)]
pub struct Simulator<'a> {
    run: &'a Run,
    stepper: Stepper<'a>,
    sampler: Option<NoiseSampler>,
    steps: usize,
}

impl<'a> Simulator<'a> {
    pub fn new(run: &'a Run) -> Result<Self> {
        let steps = run.solver.n_steps()?;
        if run.initial.len() != run.system.n_dofs() {
            return Err(Error::DimensionMismatch { expected: run.system.n_dofs(), found: run.initial.len() });
        }
        let stepper = Stepper::new(
            &run.system,
            run.drift.as_ref(),
            &run.diffusion,
            run.solver.scheme,
            run.solver.dt,
            run.solver.taming_exponent,
        )?;
        let sampler = if run.diffusion.is_zero() { None } else { Some(NoiseSampler::new(&run.noise, &run.system)?) };
        Ok(Self { run, stepper, sampler, steps })
    }

    pub fn n_steps(&self) -> usize {
        self.steps
    }

    pub fn sampler(&self) -> Option<&NoiseSampler> {
        self.sampler.as_ref()
    }

    pub fn path(&self, trajectory: u64) -> Result<TrajectorySet> {
        let dt = self.run.solver.dt;
        self.integrate(trajectory, |sampler, step, z, out| {
            sampler.increment_into(self.run.seed, trajectory, step as u64, dt, z, out)
        })
    }

    /// Path driven by the fine-grid increments of step `dt / ratio`, summed
    /// over groups of `ratio`; levels built with the same seed share noise.
    pub fn coupled_path(&self, trajectory: u64, ratio: usize) -> Result<TrajectorySet> {
        let dt_fine = self.run.solver.dt / ratio as f64;
        self.integrate(trajectory, |sampler, step, z, out| {
            sampler.aggregated_into(self.run.seed, trajectory, (step * ratio) as u64, ratio as u64, dt_fine, z, out)
        })
    }

    fn integrate(
        &self,
        trajectory: u64,
        mut increment: impl FnMut(&NoiseSampler, usize, &mut [f64], &mut [f64]),
    ) -> Result<TrajectorySet> {
        let cfg = &self.run.solver;
        let stride = cfg.snapshot_stride.max(1);
        let mut set = TrajectorySet::new(trajectory, self.run.seed);
        set.config_hash = self.run.config_hash.clone();
        let mut u = self.run.initial.0.clone();
        set.push(0.0, StateVector(u.clone()));
        let mut z = vec![0.0; self.sampler.as_ref().map_or(0, |s| s.latent_dim())];
        let mut dw = vec![0.0; u.len()];
        for n in 0..self.steps {
            let t = n as f64 * cfg.dt;
            let noise = match &self.sampler {
                Some(s) => {
                    increment(s, n, &mut z, &mut dw);
                    Some(dw.as_slice())
                }
                None => None,
            };
            let t_next = (n + 1) as f64 * cfg.dt;
            let err = |norm| Error::BlowupDetected { step: n + 1, time: t_next, norm };
            match self.stepper.step(t, &mut u, noise) {
                Ok(()) => {}
                Err(Error::LinearSolveFailure(_)) => return Err(err(f64::INFINITY)),
                Err(e) => return Err(e),
            }
            let norm = max_abs(&u);
            if norm > cfg.blowup_guard {
                return Err(err(norm));
            }
            if (n + 1) % stride == 0 || n + 1 == self.steps {
                set.push(t_next, StateVector(u.clone()));
            } else {
                set.observe(&u);
            }
        }
        Ok(set)
    }
}

pub fn simulate_path(run: &Run, trajectory: u64) -> Result<TrajectorySet> {
    Simulator::new(run)?.path(trajectory)
}

/// `½ uᵀ(S+K)u + Σ_j μ_j ∫ H(u_j)` with `H(η) = ¼(η² − β²)²`. The potential
/// term is integrated by 3-point Gauss for the consistent mass and by the
/// lumped nodal rule `Σ_a m_a H(u_a)` for the lumped mass.
pub fn allen_cahn_energy(sys: &DiscreteSystem, beta: f64, u: &[f64]) -> f64 {
    let quadratic = 0.5 * sys.form().quad_form(u);
    let well = match (sys.mass_kind(), sys.mesh()) {
        (MassKind::Consistent, Some(mesh)) => {
            const GAUSS3: [(f64, f64); 3] = [
                (0.112_701_665_379_258_3, 5.0 / 18.0),
                (0.5, 8.0 / 18.0),
                (0.887_298_334_620_741_7, 5.0 / 18.0),
            ];
            let weights = sys.weights();
            let mut total = 0.0;
            for (j, mu) in weights.iter().enumerate() {
                for l in 0..=mesh.interior_nodes() {
                    let (a, b) = (u[mesh.dof(j, l)], u[mesh.dof(j, l + 1)]);
                    let e: f64 = GAUSS3.iter().map(|&(s, w)| w * double_well((1.0 - s) * a + s * b, beta)).sum();
                    total += mu * mesh.h() * e;
                }
            }
            total
        }
        _ => sys.lumped_mass().iter().zip(u).map(|(m, &v)| m * double_well(v, beta)).sum(),
    };
    quadratic + well
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::CsrMatrix;
    use nalgebra::DMatrix;

    fn scalar_system() -> DiscreteSystem {
        DiscreteSystem::from_matrices(CsrMatrix::diagonal(&[1.0]), CsrMatrix::diagonal(&[0.0])).unwrap()
    }

    fn allen_cahn_scalar(beta: f64) -> DriftSpec {
        DriftSpec::constant(1, &[0.0, beta * beta, 0.0, 1.0], 1, 1.0, (beta * beta).max(1.0)).unwrap()
    }

    fn scalar_run(scheme: Scheme, dt: f64, t_end: f64, xi: f64) -> Run {
        Run {
            system: scalar_system(),
            drift: Some(allen_cahn_scalar(1.0)),
            diffusion: DiffusionSpec::zero(1),
            noise: NoiseModel::White,
            solver: SolverConfig::new(dt, t_end).unwrap().with_scheme(scheme),
            initial: StateVector(vec![xi]),
            seed: 0,
            config_hash: None,
        }
    }

    #[test]
    fn config_checks() {
        assert!(SolverConfig::new(0.0, 1.0).is_err());
        assert!(SolverConfig::new(2.0, 1.0).is_err());
        assert!(SolverConfig::new(0.3, 1.0).is_err());
        assert_eq!(SolverConfig::new(0.1, 1.0).unwrap().n_steps().unwrap(), 10);
    }

    #[test]
    fn well_bottom_is_fixed() {
        for scheme in [Scheme::SemiImplicitTamed, Scheme::SemiImplicitPlain, Scheme::ExponentialEuler] {
            let path = simulate_path(&scalar_run(scheme, 0.01, 1.0, 1.0), 0).unwrap();
            assert!(path.states().iter().all(|s| s[0] == 1.0));
        }
    }

    #[test]
    fn plain_scheme_blows_up_where_tamed_survives() {
        let plain = simulate_path(&scalar_run(Scheme::SemiImplicitPlain, 0.1, 2.0, 10.0), 0);
        assert!(matches!(plain, Err(Error::BlowupDetected { .. })), "{plain:?}");
        let tamed = simulate_path(&scalar_run(Scheme::SemiImplicitTamed, 0.1, 10.0, 10.0), 0).unwrap();
        assert!(tamed.sup_norm() <= 10.0);
        assert!((tamed.final_state().unwrap()[0] - 1.0).abs() < 1e-3);
    }

    #[test]
    fn one_step_gaussian_moments() {
        // linear additive step: mean = (G + ΔtF)⁻¹ G u, covariance = Δt·B G Bᵀ with B = (G + ΔtF)⁻¹
        let g = CsrMatrix::from_dense(&DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]));
        let f = CsrMatrix::from_dense(&DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]));
        let sys = DiscreteSystem::from_matrices(g.clone(), f.clone()).unwrap();
        let dt = 0.1;
        let run = Run {
            system: sys,
            drift: None,
            diffusion: DiffusionSpec::additive(1.0, 1),
            noise: NoiseModel::White,
            solver: SolverConfig::new(dt, dt).unwrap(),
            initial: StateVector(vec![1.0, -0.5]),
            seed: 42,
            config_hash: None,
        };
        let sim = Simulator::new(&run).unwrap();
        let gd = g.to_dense();
        let b = (&gd + f.to_dense() * dt).try_inverse().unwrap();
        let mean = &b * &gd * nalgebra::DVector::from_column_slice(&run.initial);
        let cov = &b * &gd * b.transpose() * dt;
        let n = 40_000;
        let mut m = nalgebra::DVector::zeros(2);
        let mut c = DMatrix::zeros(2, 2);
        for k in 0..n {
            let x = nalgebra::DVector::from_column_slice(sim.path(k).unwrap().final_state().unwrap());
            m += &x;
            let d = &x - &mean;
            c += &d * d.transpose();
        }
        m /= n as f64;
        c /= n as f64;
        for i in 0..2 {
            let se = (cov[(i, i)] / n as f64).sqrt();
            assert!((m[i] - mean[i]).abs() < 4.0 * se, "{m} {mean}");
            for j in 0..2 {
                let se = ((cov[(i, i)] * cov[(j, j)] + cov[(i, j)].powi(2)) / n as f64).sqrt();
                assert!((c[(i, j)] - cov[(i, j)]).abs() < 4.0 * se);
            }
        }
    }

    #[test]
    fn seeds_reproduce_bitwise() {
        let mut run = scalar_run(Scheme::SemiImplicitTamed, 0.01, 0.5, 0.3);
        run.diffusion = DiffusionSpec::additive(0.5, 1);
        run.seed = 7;
        let a = simulate_path(&run, 3).unwrap();
        let b = simulate_path(&run, 3).unwrap();
        assert_eq!(a, b);
        let c = simulate_path(&run, 4).unwrap();
        assert_ne!(a.final_state(), c.final_state());
    }
}
