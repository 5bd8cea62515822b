//! Run configuration: a single JSON document, unknown keys rejected.
//!
//! Coefficient functions are given as numbers, expression strings or, for
//! `c` and `p`, nodal arrays `{"nodal": [...]}` with `interior_nodes + 2`
//! samples per edge. Any per-edge entry may be a single value shared by all
//! edges or a list with one value per edge. The expression grammar is
//! documented in `docs/config.md`.

use std::fs;
use std::path::{Path, PathBuf};

use netac::expr::{Expr, Var};
use netac::{MassKind, Scheme, ScalarFn, VertexProfile};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub graph: GraphConfig,
    /// Dense row-major vertex matrix `M`.
    pub vertex_matrix: Vec<Vec<f64>>,
    #[serde(default)]
    pub vertex_profile: VertexProfile,
    #[serde(default)]
    pub allow_zero_vertex_matrix: bool,
    #[serde(default)]
    pub fields: FieldsConfig,
    #[serde(default)]
    pub drift: DriftConfig,
    #[serde(default)]
    pub diffusion: DiffusionConfig,
    #[serde(default)]
    pub noise: NoiseConfig,
    pub mesh: MeshConfig,
    pub solver: SolverSection,
    #[serde(default)]
    pub initial: PerEdge<Scalar>,
    #[serde(default)]
    pub experiment: ExperimentConfig,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("netac-out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphConfig {
    pub vertices: usize,
    /// 1-based `[start, end]` pairs.
    pub edges: Vec<[usize; 2]>,
}

/// A number or an expression string.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Scalar {
    Number(f64),
    Expr(String),
}

impl Default for Scalar {
    fn default() -> Self {
        Scalar::Number(0.0)
    }
}

/// A spatial coefficient: number, expression in `x`, or nodal samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Field {
    Number(f64),
    Expr(String),
    Nodal { nodal: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PerEdge<T> {
    All(T),
    Each(Vec<T>),
}

impl<T: Default> Default for PerEdge<T> {
    fn default() -> Self {
        PerEdge::All(T::default())
    }
}

impl<T> PerEdge<T> {
    /// One entry per edge together with its JSON path.
    pub fn resolve(&self, n_edges: usize, path: &str) -> CliResult<Vec<(String, &T)>> {
        match self {
            PerEdge::All(v) => Ok((0..n_edges).map(|_| (path.to_string(), v)).collect()),
            PerEdge::Each(vs) if vs.len() == n_edges => {
                Ok(vs.iter().enumerate().map(|(j, v)| (format!("{path}[{j}]"), v)).collect())
            }
            PerEdge::Each(vs) => Err(CliError::SchemaViolation {
                path: path.to_string(),
                message: format!("expected {n_edges} per-edge entries, found {}", vs.len()),
            }),
        }
    }

    fn iter_with_paths<'a>(&'a self, path: &'a str) -> Box<dyn Iterator<Item = (String, &'a T)> + 'a> {
        match self {
            PerEdge::All(v) => Box::new(std::iter::once((path.to_string(), v))),
            PerEdge::Each(vs) => Box::new(vs.iter().enumerate().map(move |(j, v)| (format!("{path}[{j}]"), v))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldsConfig {
    #[serde(default = "unit_field")]
    pub c: PerEdge<Field>,
    #[serde(default = "zero_field")]
    pub p: PerEdge<Field>,
    #[serde(default = "unit_weight")]
    pub mu: PerEdge<f64>,
}

fn unit_field() -> PerEdge<Field> {
    PerEdge::All(Field::Number(1.0))
}

fn zero_field() -> PerEdge<Field> {
    PerEdge::All(Field::Number(0.0))
}

fn unit_weight() -> PerEdge<f64> {
    PerEdge::All(1.0)
}

impl Default for FieldsConfig {
    fn default() -> Self {
        Self { c: unit_field(), p: zero_field(), mu: unit_weight() }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DriftConfig {
    #[default]
    None,
    AllenCahn(AllenCahnConfig),
    Polynomial(PolynomialConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AllenCahnConfig {
    pub betas: Vec<f64>,
}

/// `f_j = −a_{2k+1} u^{2k+1} + Σ_{l≤2k} a_l u^l`; coefficients listed from
/// `a_0` to `a_{2k+1}`, expressions in `t` and `x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolynomialConfig {
    pub k: usize,
    pub coefficients: PerEdge<Vec<Scalar>>,
    pub lower_bound: f64,
    pub upper_bound: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiffusionConfig {
    /// `g_j(t, x, u)`.
    #[serde(default)]
    pub g: PerEdge<Scalar>,
    /// Declared `[r, L]` pairs: Lipschitz constant `L` on `|u| ≤ r`.
    #[serde(default)]
    pub lipschitz: Vec<[f64; 2]>,
    /// Declared `c′` in `|g| ≤ c′(1 + |u|)`.
    #[serde(default)]
    pub growth: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseConfig {
    #[default]
    White,
    Colored(ColoredConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ColoredConfig {
    pub decay: f64,
    #[serde(default = "one")]
    pub amplitude: f64,
    #[serde(default = "default_modes")]
    pub modes: usize,
}

fn one() -> f64 {
    1.0
}

fn default_modes() -> usize {
    32
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshConfig {
    pub interior_nodes: usize,
    #[serde(default)]
    pub mass: MassKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    pub dt: f64,
    pub t_end: f64,
    #[serde(default)]
    pub scheme: Scheme,
    #[serde(default = "one")]
    pub taming_exponent: f64,
    #[serde(default = "one_usize")]
    pub snapshot_stride: usize,
    #[serde(default = "default_guard")]
    pub blowup_guard: f64,
}

fn one_usize() -> usize {
    1
}

fn default_guard() -> f64 {
    1e6
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub validate: ValidateParams,
    #[serde(default)]
    pub spectrum: SpectrumParams,
    #[serde(default)]
    pub simulate: SimulateParams,
    #[serde(default)]
    pub convergence: Option<ConvergenceParams>,
    #[serde(default)]
    pub holder: Option<HolderParams>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValidateParams {
    #[serde(default = "default_lattice")]
    pub lattice_points: usize,
    #[serde(default = "default_eta_points")]
    pub eta_points: usize,
    #[serde(default = "default_times")]
    pub times: Vec<f64>,
}

fn default_lattice() -> usize {
    64
}

fn default_eta_points() -> usize {
    201
}

fn default_times() -> Vec<f64> {
    vec![0.01, 0.1, 1.0]
}

impl Default for ValidateParams {
    fn default() -> Self {
        Self { lattice_points: default_lattice(), eta_points: default_eta_points(), times: default_times() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumParams {
    #[serde(default = "default_count")]
    pub count: usize,
    #[serde(default = "default_times")]
    pub times: Vec<f64>,
}

fn default_count() -> usize {
    10
}

impl Default for SpectrumParams {
    fn default() -> Self {
        Self { count: default_count(), times: default_times() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateParams {
    #[serde(default = "one_usize")]
    pub trajectories: usize,
    /// Exponent `q` of the reported moment `E sup_t ‖X(t)‖^q`.
    #[serde(default = "two")]
    pub moment: f64,
}

fn two() -> f64 {
    2.0
}

impl Default for SimulateParams {
    fn default() -> Self {
        Self { trajectories: 1, moment: 2.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergenceParams {
    /// Reference step first, then coarser integer multiples of it.
    pub ladder: Vec<f64>,
    #[serde(default = "default_ensemble")]
    pub trajectories: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HolderParams {
    pub lags: Vec<f64>,
    #[serde(default)]
    pub t_start: f64,
    #[serde(default)]
    pub norm: HolderNormConfig,
    #[serde(default = "default_ensemble")]
    pub trajectories: usize,
}

fn default_ensemble() -> usize {
    100
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HolderNormConfig {
    #[default]
    E2,
    EInf,
}

/// Reads, deserializes and expression-checks a config file.
pub fn parse_config(path: &Path) -> CliResult<RunConfig> {
    if !path.is_file() {
        return Err(CliError::FileNotFound(path.to_path_buf()));
    }
    let text = fs::read_to_string(path)?;
    parse_config_str(&text)
}

pub fn parse_config_str(text: &str) -> CliResult<RunConfig> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| CliError::SchemaViolation {
        path: e.path().to_string(),
        message: e.inner().to_string(),
    })?;
    cfg.check_expressions()?;
    Ok(cfg)
}

impl RunConfig {
    /// Compact serialization with defaults filled; field order is fixed by
    /// the struct layout, so equal configs give equal bytes.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    /// Hex SHA-256 of the canonical serialization.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical_json().as_bytes()))
    }

    pub fn n_edges(&self) -> usize {
        self.graph.edges.len()
    }

    fn check_expressions(&self) -> CliResult<()> {
        const SPATIAL: &[Var] = &[Var::X];
        for (path, field) in self.fields.c.iter_with_paths("fields.c").chain(self.fields.p.iter_with_paths("fields.p")) {
            if let Field::Expr(s) = field {
                compile_expr(s, &path, SPATIAL)?;
            }
        }
        if let DriftConfig::Polynomial(p) = &self.drift {
            for (path, row) in p.coefficients.iter_with_paths("drift.polynomial.coefficients") {
                for (l, a) in row.iter().enumerate() {
                    compile(a, &format!("{path}[{l}]"), &[Var::T, Var::X])?;
                }
            }
        }
        for (path, g) in self.diffusion.g.iter_with_paths("diffusion.g") {
            compile(g, &path, &[Var::T, Var::X, Var::U])?;
        }
        for (path, u0) in self.initial.iter_with_paths("initial") {
            compile(u0, &path, SPATIAL)?;
        }
        Ok(())
    }
}

pub fn compile_expr(src: &str, path: &str, allowed: &[Var]) -> CliResult<ScalarFn> {
    Expr::parse_with(src, allowed)
        .map(ScalarFn::from_expr)
        .map_err(|e| CliError::ExpressionParseError { path: path.to_string(), position: e.position, message: e.message })
}

pub fn compile(s: &Scalar, path: &str, allowed: &[Var]) -> CliResult<ScalarFn> {
    match s {
        Scalar::Number(v) => Ok(ScalarFn::Const(*v)),
        Scalar::Expr(src) => compile_expr(src, path, allowed),
    }
}
