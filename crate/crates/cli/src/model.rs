//! Turns a parsed config into core objects.

use netac::coefficients::{validate_diffusion, validate_drift};
use netac::discretization::interpolate;
use netac::expr::Var;
use netac::graph::validate_vertex_matrix;
use netac::noise::colored_noise_operator;
use netac::{
    allen_cahn_drift, assemble_form, build_edge_fields, build_graph, build_mesh, AllenCahnSpec, DiffusionSpec,
    DriftSpec, EdgeField, Lattice, Mesh, MetricGraph, NoiseModel, Profile, Run, ScalarFn, SolverConfig,
    ValidationReport, VertexMatrix,
};

use crate::config::{compile, compile_expr, DriftConfig, Field, NoiseConfig, RunConfig};
use crate::error::{CliError, CliResult};

#[derive(Debug, Clone)]
pub struct Model {
    pub graph: MetricGraph,
    pub vertex_matrix: VertexMatrix,
    pub mesh: Mesh,
    pub allen_cahn: Option<AllenCahnSpec>,
    pub run: Run,
}

fn profile(field: &Field, path: &str) -> CliResult<Profile> {
    Ok(match field {
        Field::Number(v) => Profile::constant(*v),
        Field::Expr(s) => Profile::Function(compile_expr(s, path, &[Var::X])?),
        Field::Nodal { nodal } => Profile::Nodal(nodal.clone()),
    })
}

impl Model {
    pub fn build(cfg: &RunConfig, seed: u64) -> CliResult<Model> {
        let edges: Vec<(usize, usize)> = cfg.graph.edges.iter().map(|&[a, b]| (a, b)).collect();
        let graph = build_graph(cfg.graph.vertices, &edges)?;
        let m = edges.len();
        let vertex_matrix = VertexMatrix::from_rows(&cfg.vertex_matrix)?;
        let mesh = build_mesh(&graph, cfg.mesh.interior_nodes)?;

        let c = cfg.fields.c.resolve(m, "fields.c")?;
        let p = cfg.fields.p.resolve(m, "fields.p")?;
        let mu = cfg.fields.mu.resolve(m, "fields.mu")?;
        let specs = (0..m)
            .map(|j| {
                Ok(EdgeField {
                    conductance: profile(c[j].1, &c[j].0)?,
                    potential: profile(p[j].1, &p[j].0)?,
                    weight: *mu[j].1,
                })
            })
            .collect::<CliResult<Vec<_>>>()?;
        let base = build_edge_fields(specs, &mesh)?;

        let (drift, fields, allen_cahn) = match &cfg.drift {
            DriftConfig::None => (None, base, None),
            DriftConfig::AllenCahn(ac) => {
                let (d, shifted) = allen_cahn_drift(&ac.betas, &base)?;
                (Some(d), shifted, Some(AllenCahnSpec::new(&ac.betas)?))
            }
            DriftConfig::Polynomial(pc) => {
                let rows = pc
                    .coefficients
                    .resolve(m, "drift.polynomial.coefficients")?
                    .into_iter()
                    .map(|(path, row)| {
                        row.iter()
                            .enumerate()
                            .map(|(l, a)| compile(a, &format!("{path}[{l}]"), &[Var::T, Var::X]))
                            .collect::<CliResult<Vec<ScalarFn>>>()
                    })
                    .collect::<CliResult<Vec<_>>>()?;
                (Some(DriftSpec::new(pc.k, rows, pc.lower_bound, pc.upper_bound)?), base, None)
            }
        };

        let system = assemble_form(&mesh, &fields, &vertex_matrix)?.with_mass(cfg.mesh.mass);

        let g = cfg
            .diffusion
            .g
            .resolve(m, "diffusion.g")?
            .into_iter()
            .map(|(path, s)| compile(s, &path, &[Var::T, Var::X, Var::U]))
            .collect::<CliResult<Vec<_>>>()?;
        let diffusion = DiffusionSpec {
            functions: g,
            lipschitz: cfg.diffusion.lipschitz.iter().map(|&[r, l]| (r, l)).collect(),
            growth: cfg.diffusion.growth,
        };

        let noise = match &cfg.noise {
            NoiseConfig::White => NoiseModel::White,
            NoiseConfig::Colored(c) => colored_noise_operator(c.decay, c.amplitude, c.modes)?,
        };

        let s = &cfg.solver;
        let solver = SolverConfig {
            dt: s.dt,
            t_end: s.t_end,
            scheme: s.scheme,
            taming_exponent: s.taming_exponent,
            snapshot_stride: s.snapshot_stride,
            blowup_guard: s.blowup_guard,
        };
        if solver.snapshot_stride == 0 {
            return Err(CliError::SchemaViolation {
                path: "solver.snapshot_stride".into(),
                message: "must be at least 1".into(),
            });
        }
        solver.n_steps()?;

        let u0 = cfg
            .initial
            .resolve(m, "initial")?
            .into_iter()
            .map(|(path, s)| compile(s, &path, &[Var::X]))
            .collect::<CliResult<Vec<_>>>()?;
        let initial = interpolate(&mesh, |j, x| u0[j].eval(0.0, x, 0.0))?;

        let run = Run { system, drift, diffusion, noise, solver, initial, seed, config_hash: Some(cfg.hash()) };
        Ok(Model { graph, vertex_matrix, mesh, allen_cahn, run })
    }

    pub fn vertex_report(&self, cfg: &RunConfig) -> CliResult<ValidationReport> {
        Ok(validate_vertex_matrix(&self.graph, &self.vertex_matrix, cfg.vertex_profile, cfg.allow_zero_vertex_matrix)?)
    }

    /// Sampled coefficient checks: vertex matrix, drift and diffusion.
    pub fn coefficient_report(&self, cfg: &RunConfig) -> CliResult<ValidationReport> {
        let mut report = ValidationReport::new("config");
        report.merge("vertex_matrix", self.vertex_report(cfg)?);
        let n = cfg.experiment.validate.lattice_points;
        let lattice = Lattice { t_end: cfg.solver.t_end, t_points: n, x_points: n };
        if let Some(d) = &self.run.drift {
            report.merge("drift", validate_drift(d, &self.graph, &lattice)?);
        }
        report.merge("diffusion", validate_diffusion(&self.run.diffusion, &lattice, cfg.experiment.validate.eta_points));
        Ok(report)
    }
}
