//! Monte Carlo ensembles and the estimators built on them: temporal Hölder
//! exponents, strong self-convergence order and Kirchhoff vertex residuals.
//!
//! Trajectories are generated in parallel in fixed-size chunks and reduced
//! sequentially in trajectory order, so results do not depend on the thread
//! count or on completion order.

use rayon::prelude::*;
use serde::Serialize;

use crate::discretization::{DiscreteSystem, StateVector};
use crate::error::{Error, Result};
use crate::linalg::max_abs;
use crate::solver::{Run, Simulator, SolverConfig, TrajectorySet};

const CHUNK: usize = 64;
/// Two-sided 95% normal quantile.
const Z95: f64 = 1.959_963_984_540_054;
/// Minimum ratio of the smallest lag to the time step.
pub const MIN_LAG_RESOLUTION: f64 = 10.0;
pub const MIN_REGRESSION_POINTS: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Regression {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub residuals: Vec<f64>,
}

/// Ordinary least squares fit `y ≈ intercept + slope·x`.
pub fn ols(x: &[f64], y: &[f64]) -> Result<Regression> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch { expected: x.len(), found: y.len() });
    }
    if x.len() < 2 {
        return Err(Error::LadderTooShort { len: x.len(), required: 2 });
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidLadder("regression abscissae are all equal".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residuals: Vec<f64> = x.iter().zip(y).map(|(a, b)| b - intercept - slope * a).collect();
    let ss_res: f64 = residuals.iter().map(|r| r * r).sum();
    let ss_tot: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    let r_squared = if ss_tot == 0.0 { 1.0 } else { 1.0 - ss_res / ss_tot };
    Ok(Regression { slope, intercept, r_squared, residuals })
}

/// Slope of a log-log fit together with its ladder and the fitted values.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExponentEstimate {
    pub estimate: f64,
    /// 95% normal half-width from the spread of per-trajectory slopes.
    pub half_width: f64,
    pub regression: Regression,
    pub ladder: Vec<f64>,
    pub values: Vec<f64>,
    pub trajectories: usize,
}

fn log_log(ladder: &[f64], values: &[f64]) -> Result<Regression> {
    let lx: Vec<f64> = ladder.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = values.iter().map(|v| v.ln()).collect();
    ols(&lx, &ly)
}

/// Combines per-trajectory value ladders into an estimate.
fn exponent_from_samples(ladder: &[f64], per_traj: &[Vec<f64>]) -> Result<ExponentEstimate> {
    let n = per_traj.len();
    let mut values = vec![0.0; ladder.len()];
    for row in per_traj {
        values.iter_mut().zip(row).for_each(|(a, b)| *a += b);
    }
    values.iter_mut().for_each(|v| *v /= n as f64);
    let regression = log_log(ladder, &values)?;
    let half_width = if n >= 2 {
        let slopes: Vec<f64> = per_traj
            .iter()
            .filter(|row| row.iter().all(|v| *v > 0.0))
            .filter_map(|row| log_log(ladder, row).ok().map(|r| r.slope))
            .collect();
        let k = slopes.len() as f64;
        if k >= 2.0 {
            let mean = slopes.iter().sum::<f64>() / k;
            let var = slopes.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (k - 1.0);
            Z95 * (var / k).sqrt()
        } else {
            f64::NAN
        }
    } else {
        f64::NAN
    };
    Ok(ExponentEstimate { estimate: regression.slope, half_width, regression, ladder: ladder.to_vec(), values, trajectories: n })
}

/// Runs `f` on trajectories `0..n` in parallel chunks, results in index order.
fn ordered_map<T: Send>(n: usize, f: impl Fn(u64) -> Result<T> + Sync) -> Result<Vec<T>> {
    let mut out = Vec::with_capacity(n);
    for start in (0..n).step_by(CHUNK) {
        let end = (start + CHUNK).min(n);
        let chunk: Vec<Result<T>> = (start..end)
            .into_par_iter()
            .map(|k| f(k as u64).map_err(|e| Error::Trajectory { id: k as u64, source: Box::new(e) }))
            .collect();
        for r in chunk {
            out.push(r?);
        }
    }
    Ok(out)
}

/// Ensemble statistics over snapshot times.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnsembleStats {
    pub trajectories: usize,
    pub times: Vec<f64>,
    pub mean: Vec<StateVector>,
    pub variance: Vec<StateVector>,
    /// Moment order `q` of `E sup_t ‖X(t)‖_∞^q`.
    pub q: f64,
    pub sup_moment: f64,
    pub sup_moment_stderr: f64,
    /// `(probability, quantile)` of `sup_t ‖X(t)‖_∞`.
    pub sup_quantiles: Vec<(f64, f64)>,
}

struct PathSummary {
    states: Vec<StateVector>,
    times: Vec<f64>,
    sup: f64,
}

pub fn monte_carlo(run: &Run, n_traj: usize, q: f64) -> Result<EnsembleStats> {
    if n_traj < 2 {
        return Err(Error::InvalidParameter(format!("need at least 2 trajectories, got {n_traj}")));
    }
    let sim = Simulator::new(run)?;
    let mut times = Vec::new();
    let mut mean: Vec<Vec<f64>> = Vec::new();
    let mut m2: Vec<Vec<f64>> = Vec::new();
    let mut sups = Vec::with_capacity(n_traj);
    let mut count = 0usize;
    for start in (0..n_traj).step_by(CHUNK) {
        let end = (start + CHUNK).min(n_traj);
        let paths = ordered_map(end - start, |k| {
            let p = sim.path(start as u64 + k)?;
            Ok(PathSummary { sup: p.sup_norm(), times: p.times().to_vec(), states: p.states().to_vec() })
        })
        .map_err(|e| match e {
            Error::Trajectory { id, source } => Error::Trajectory { id: id + start as u64, source },
            other => other,
        })?;
        for p in paths {
            if count == 0 {
                times = p.times.clone();
                mean = p.states.iter().map(|s| vec![0.0; s.len()]).collect();
                m2 = mean.clone();
            }
            count += 1;
            for ((mu, s2), x) in mean.iter_mut().zip(m2.iter_mut()).zip(&p.states) {
                for i in 0..x.len() {
                    let d = x[i] - mu[i];
                    mu[i] += d / count as f64;
                    s2[i] += d * (x[i] - mu[i]);
                }
            }
            sups.push(p.sup);
        }
    }
    let variance = m2.into_iter().map(|v| StateVector(v.into_iter().map(|s| s / (count - 1) as f64).collect())).collect();
    let powered: Vec<f64> = sups.iter().map(|s| s.powf(q)).collect();
    let sup_moment = powered.iter().sum::<f64>() / count as f64;
    let var = powered.iter().map(|v| (v - sup_moment).powi(2)).sum::<f64>() / (count - 1) as f64;
    let mut sorted = sups.clone();
    sorted.sort_by(f64::total_cmp);
    let quantile = |p: f64| {
        let pos = p * (sorted.len() - 1) as f64;
        let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
        sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
    };
    Ok(EnsembleStats {
        trajectories: count,
        times,
        mean: mean.into_iter().map(StateVector).collect(),
        variance,
        q,
        sup_moment,
        sup_moment_stderr: (var / count as f64).sqrt(),
        sup_quantiles: [0.05, 0.5, 0.95].iter().map(|&p| (p, quantile(p))).collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum HolderNorm {
    E2,
    EInf,
}

impl HolderNorm {
    /// `E_2` uses the exact `L²` norm of the P1 function, `√(dᵀ G d)` with the consistent mass.
    pub fn eval(self, sys: &DiscreteSystem, d: &[f64]) -> f64 {
        match self {
            HolderNorm::E2 => sys.consistent_mass().quad_form(d).max(0.0).sqrt(),
            HolderNorm::EInf => max_abs(d),
        }
    }
}

fn check_ladder(ladder: &[f64]) -> Result<()> {
    if ladder.len() < MIN_REGRESSION_POINTS {
        return Err(Error::LadderTooShort { len: ladder.len(), required: MIN_REGRESSION_POINTS });
    }
    if ladder.windows(2).any(|w| !(w[1] > w[0])) || !(ladder[0] > 0.0) {
        return Err(Error::InvalidLadder("ladder must be positive and strictly increasing".into()));
    }
    Ok(())
}

fn integer_ratio(value: f64, unit: f64) -> Result<usize> {
    let r = value / unit;
    let k = r.round();
    if k < 1.0 || (r - k).abs() > 1e-6 * r {
        return Err(Error::InvalidLadder(format!("{value} is not an integer multiple of {unit}")));
    }
    Ok(k as usize)
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 { a } else { gcd(b, a % b) }
}

/// Mean increment norms `(1/|I|) Σ_{i∈I} ‖X(t_i + δ_l) − X(t_i)‖` of one
/// path for lags given in snapshot units, over `t_i ≥ t_start`.
fn mean_increments(path: &TrajectorySet, lag_units: &[usize], t_start: f64, norm: &dyn Fn(&[f64]) -> f64) -> Result<Vec<f64>> {
    let states = path.states();
    let first = path.times().iter().position(|&t| t >= t_start - 1e-12).unwrap_or(states.len());
    let mut out = Vec::with_capacity(lag_units.len());
    let mut diff = vec![0.0; states.first().map_or(0, |s| s.len())];
    for &d in lag_units {
        if first + d >= states.len() {
            return Err(Error::InvalidLadder("largest lag does not fit between t_start and T".into()));
        }
        let mut acc = 0.0;
        let count = states.len() - d - first;
        for i in first..states.len() - d {
            diff.iter_mut().zip(states[i + d].iter().zip(states[i].iter())).for_each(|(o, (a, b))| *o = a - b);
            acc += norm(&diff);
        }
        out.push(acc / count as f64);
    }
    Ok(out)
}

/// Hölder exponent estimate from precomputed, equally spaced paths.
pub fn holder_from_paths(
    paths: &[TrajectorySet],
    lags: &[f64],
    t_start: f64,
    norm: &dyn Fn(&[f64]) -> f64,
) -> Result<ExponentEstimate> {
    check_ladder(lags)?;
    let times = paths.first().map(|p| p.times()).ok_or(Error::InvalidParameter("no paths".into()))?;
    if times.len() < 2 {
        return Err(Error::InvalidParameter("paths need at least two snapshots".into()));
    }
    let spacing = times[1] - times[0];
    let units = lags.iter().map(|&l| integer_ratio(l, spacing)).collect::<Result<Vec<_>>>()?;
    let per_traj = paths.iter().map(|p| mean_increments(p, &units, t_start, norm)).collect::<Result<Vec<_>>>()?;
    exponent_from_samples(lags, &per_traj)
}

/// Regresses `log E‖X(t+δ) − X(t)‖` on `log δ` over `t ≥ t_start`.
pub fn estimate_holder_exponent(
    run: &Run,
    lags: &[f64],
    n_traj: usize,
    norm: HolderNorm,
    t_start: f64,
) -> Result<ExponentEstimate> {
    check_ladder(lags)?;
    let dt = run.solver.dt;
    if lags[0] < MIN_LAG_RESOLUTION * dt * (1.0 - 1e-9) {
        return Err(Error::InsufficientResolution { dt, lag: lags[0] });
    }
    if lags[lags.len() - 1] >= run.solver.t_end - t_start {
        return Err(Error::InvalidLadder("largest lag must be below T − t_start".into()));
    }
    let steps = lags.iter().map(|&l| integer_ratio(l, dt)).collect::<Result<Vec<_>>>()?;
    let stride = steps.iter().copied().fold(0, gcd);
    let units: Vec<usize> = steps.iter().map(|s| s / stride).collect();
    let strided = run.with_solver(SolverConfig { snapshot_stride: stride, ..run.solver });
    if strided.solver.n_steps()? % stride != 0 {
        return Err(Error::InvalidLadder("T must be a multiple of the snapshot spacing".into()));
    }
    let sim = Simulator::new(&strided)?;
    let sys = &run.system;
    let f = |d: &[f64]| norm.eval(sys, d);
    let per_traj = ordered_map(n_traj, |k| mean_increments(&sim.path(k)?, &units, t_start, &f))?;
    exponent_from_samples(lags, &per_traj)
}

/// Strong self-convergence: `ladder[0]` is the reference step, the other
/// levels are integer multiples of it and share its noise increments.
pub fn estimate_strong_order(run: &Run, ladder: &[f64], n_traj: usize) -> Result<ExponentEstimate> {
    if ladder.len() < MIN_REGRESSION_POINTS + 1 {
        return Err(Error::LadderTooShort { len: ladder.len(), required: MIN_REGRESSION_POINTS + 1 });
    }
    check_ladder(ladder)?;
    let ratios = ladder.iter().map(|&dt| integer_ratio(dt, ladder[0])).collect::<Result<Vec<_>>>()?;
    let runs = ladder
        .iter()
        .map(|&dt| {
            let solver = SolverConfig { dt, snapshot_stride: usize::MAX, ..run.solver };
            solver.n_steps().map(|_| run.with_solver(solver))
        })
        .collect::<Result<Vec<_>>>()?;
    let sims = runs.iter().map(Simulator::new).collect::<Result<Vec<_>>>()?;
    let sys = &run.system;
    let per_traj = ordered_map(n_traj, |k| {
        let reference = sims[0].coupled_path(k, 1)?;
        let x_ref = reference.final_state().expect("path has a final state");
        sims[1..]
            .iter()
            .zip(&ratios[1..])
            .map(|(sim, &r)| {
                let p = sim.coupled_path(k, r)?;
                let d: Vec<f64> = p.final_state().expect("final").iter().zip(x_ref.iter()).map(|(a, b)| a - b).collect();
                Ok(HolderNorm::E2.eval(sys, &d))
            })
            .collect::<Result<Vec<f64>>>()
    })?;
    exponent_from_samples(&ladder[1..], &per_traj)
}

/// `max_i |[Mq]_i + Σ_j Φ_ij μ_j c_j(v_i) u_j′(v_i)|` with one-sided P1 gradients.
pub fn vertex_residual_state(sys: &DiscreteSystem, u: &[f64]) -> Result<f64> {
    let (mesh, data) = match (sys.mesh(), sys.vertex_data()) {
        (Some(m), Some(d)) => (m, d),
        _ => return Err(Error::InvalidParameter("vertex residual needs a meshed system".into())),
    };
    let graph = mesh.graph();
    let n = graph.n_vertices();
    let last = mesh.interior_nodes() + 1;
    let mut res: Vec<f64> = (0..n)
        .map(|i| (0..n).map(|k| data.vertex_matrix.get(i, k) * u[mesh.vertex_dof(k)]).sum())
        .collect();
    for j in 0..graph.n_edges() {
        let e = graph.edge(j);
        let mu = data.weights[j];
        let (c0, c1) = data.conductance_ends[j];
        let d0 = (u[mesh.dof(j, 1)] - u[mesh.dof(j, 0)]) / mesh.h();
        let d1 = (u[mesh.dof(j, last)] - u[mesh.dof(j, last - 1)]) / mesh.h();
        res[e.start] += mu * c0 * d0;
        res[e.end] -= mu * c1 * d1;
    }
    Ok(max_abs(&res))
}

pub fn vertex_residual(traj: &TrajectorySet, sys: &DiscreteSystem) -> Result<Vec<f64>> {
    traj.states().iter().map(|s| vertex_residual_state(sys, s)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::{build_edge_fields, DiffusionSpec, EdgeField};
    use crate::discretization::{assemble_form, build_mesh, interpolate};
    use crate::graph::{build_graph, VertexMatrix};
    use crate::linalg::CsrMatrix;
    use crate::noise::NoiseModel;
    use crate::rng::{fill_standard_normal, step_rng};

    #[test]
    fn ols_exact_line() {
        let r = ols(&[0.0, 1.0, 2.0, 3.0], &[1.0, 3.0, 5.0, 7.0]).unwrap();
        assert!((r.slope - 2.0).abs() < 1e-14 && (r.intercept - 1.0).abs() < 1e-14);
        assert!((r.r_squared - 1.0).abs() < 1e-14);
    }

    fn synthetic(n_paths: usize, steps: usize, dt: f64, f: impl Fn(u64, &mut Vec<f64>)) -> Vec<TrajectorySet> {
        (0..n_paths as u64)
            .map(|k| {
                let mut values = Vec::with_capacity(steps + 1);
                f(k, &mut values);
                let mut set = TrajectorySet::new(k, 0);
                for (i, v) in values.into_iter().enumerate() {
                    set.push(i as f64 * dt, StateVector(vec![v]));
                }
                set
            })
            .collect()
    }

    #[test]
    fn calibrates_on_brownian_and_lipschitz_input() {
        let (steps, dt) = (4000, 1e-4);
        let lags = [1e-3, 2e-3, 5e-3, 1e-2, 2e-2];
        let brownian = synthetic(50, steps, dt, |k, out| {
            let mut z = vec![0.0; steps];
            fill_standard_normal(&mut step_rng(11, k, 0), &mut z);
            let mut x = 0.0;
            out.push(x);
            for zi in z {
                x += dt.sqrt() * zi;
                out.push(x);
            }
        });
        let abs = |d: &[f64]| d[0].abs();
        let est = holder_from_paths(&brownian, &lags, 0.0, &abs).unwrap();
        assert!((est.estimate - 0.5).abs() < 0.05, "{est:?}");
        let line = synthetic(1, steps, dt, |_, out| out.extend((0..=steps).map(|i| 3.0 * i as f64 * dt)));
        let est = holder_from_paths(&line, &lags, 0.0, &abs).unwrap();
        assert!((est.estimate - 1.0).abs() < 1e-9);
    }

    fn heat_run(seed: u64, g: f64) -> Run {
        let graph = build_graph(2, &[(1, 2)]).unwrap();
        let mesh = build_mesh(&graph, 7).unwrap();
        let fields = build_edge_fields(vec![EdgeField::uniform(1.0, 0.0, 1.0)], &mesh).unwrap();
        let m = VertexMatrix::from_rows(&[vec![-1.0, 0.0], vec![0.0, -1.0]]).unwrap();
        let system = assemble_form(&mesh, &fields, &m).unwrap();
        let initial = interpolate(&mesh, |_, x| (3.0 * x).sin() + 1.0).unwrap();
        Run {
            system,
            drift: None,
            diffusion: DiffusionSpec::additive(g, 1),
            noise: NoiseModel::White,
            solver: SolverConfig::new(1.0 / 64.0, 0.25).unwrap(),
            initial,
            seed,
            config_hash: None,
        }
    }

    #[test]
    fn deterministic_ensemble_has_zero_variance() {
        let run = heat_run(3, 0.0);
        let stats = monte_carlo(&run, 4, 2.0).unwrap();
        assert!(stats.variance.iter().all(|v| v.iter().all(|&x| x == 0.0)));
        let path = crate::solver::simulate_path(&run, 0).unwrap();
        assert_eq!(stats.mean.last(), path.final_state());
    }

    #[test]
    fn estimators_validate_inputs() {
        let run = heat_run(3, 1.0);
        let short = estimate_holder_exponent(&run, &[0.0625, 0.125, 0.1875], 2, HolderNorm::E2, 0.0);
        assert!(matches!(short, Err(Error::LadderTooShort { .. })));
        let fine = estimate_holder_exponent(&run, &[1.0 / 32.0, 0.0625, 0.09375, 0.125], 2, HolderNorm::E2, 0.0);
        assert!(matches!(fine, Err(Error::InsufficientResolution { .. })));
        let ladder = [1.0 / 64.0, 1.0 / 32.0, 1.0 / 16.0, 1.0 / 8.0];
        assert!(matches!(estimate_strong_order(&run, &ladder, 2), Err(Error::LadderTooShort { .. })));
        let bad = [1.0 / 64.0, 1.0 / 32.0, 0.05, 1.0 / 16.0, 1.0 / 8.0];
        assert!(matches!(estimate_strong_order(&run, &bad, 2), Err(Error::InvalidLadder(_))));
    }

    #[test]
    fn deterministic_strong_order_is_one() {
        let mut run = heat_run(0, 0.0);
        run.solver = SolverConfig::new(1.0 / 8192.0, 0.25).unwrap();
        let mut ladder: Vec<f64> = (0..5).map(|k| (1u32 << k) as f64 / 512.0).collect();
        ladder.insert(0, 1.0 / 8192.0);
        let est = estimate_strong_order(&run, &ladder, 1).unwrap();
        assert!((est.estimate - 1.0).abs() < 0.1, "{est:?}");
    }

    #[test]
    fn constant_state_has_zero_residual() {
        let graph = build_graph(3, &[(1, 2), (2, 3), (1, 3)]).unwrap();
        let mesh = build_mesh(&graph, 5).unwrap();
        let fields = build_edge_fields(vec![EdgeField::uniform(2.0, 0.0, 1.5); 3], &mesh).unwrap();
        let m = VertexMatrix::from_rows(&[vec![-2., 1., 1.], vec![1., -1., 0.], vec![1., 0., -1.]]).unwrap();
        let sys = assemble_form(&mesh, &fields, &m).unwrap();
        assert_eq!(vertex_residual_state(&sys, &vec![1.0; sys.n_dofs()]).unwrap(), 0.0);
        let bare = DiscreteSystem::from_matrices(CsrMatrix::diagonal(&[1.0]), CsrMatrix::diagonal(&[0.0])).unwrap();
        assert!(vertex_residual_state(&bare, &[1.0]).is_err());
    }
}
