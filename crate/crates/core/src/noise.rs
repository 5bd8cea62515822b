//! Noise increments in FEM load coordinates.
//!
//! White noise gives load increments `ΔW = √Δt L_G z` with covariance `Δt G`.
//! Colored noise is diagonal in the per-edge sine basis
//! `e_k = √(2/μ_j) sin(kπx)` (orthonormal in the weighted edge space) with
//! coefficients `r_k = amplitude · k^{−s}`; its load increments are
//! `ΔW_a = √Δt Σ_{j,k} r_k ⟨e_k, φ_a⟩ z_{j,k}`, covariance `Δt G_R`.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::discretization::{noise_covariance_factor, CovarianceFactor, DiscreteSystem};
use crate::error::{Error, Result};
use crate::rng::{fill_standard_normal, step_rng};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ColoredNoise {
    pub decay: f64,
    pub amplitude: f64,
    pub modes: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseModel {
    #[default]
    White,
    Colored(ColoredNoise),
}

pub fn colored_noise_operator(decay: f64, amplitude: f64, modes: usize) -> Result<NoiseModel> {
    if !(decay > 0.5) {
        return Err(Error::DecayTooSlow(decay));
    }
    if modes == 0 || !(amplitude >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "colored noise needs modes >= 1 and amplitude >= 0, got {modes}, {amplitude}"
        )));
    }
    Ok(NoiseModel::Colored(ColoredNoise { decay, amplitude, modes }))
}

/// `∫_0^1 sin(kπx) φ_l(x) dx` for the P1 hat at local node `l` of a uniform
/// mesh with spacing `h` and `nodes` nodes.
fn sine_hat_integral(k: usize, l: usize, nodes: usize, h: f64) -> f64 {
    let w = k as f64 * PI;
    let half = 1.0 / w - (w * h).sin() / (w * w * h);
    if l == 0 {
        half
    } else if l == nodes - 1 {
        if k % 2 == 1 { half } else { -half }
    } else {
        (2.0 - 2.0 * (w * h).cos()) * (w * l as f64 * h).sin() / (w * w * h)
    }
}

#[derive(Debug, Clone)]
struct ColoredBlock {
    dofs: Vec<usize>,
    /// `nodes × modes`, row-major, already scaled by `r_k`.
    coeffs: Vec<f64>,
}

#[derive(Debug, Clone)]
enum Factor {
    Mass(CovarianceFactor),
    Colored { blocks: Vec<ColoredBlock>, modes: usize },
}

/// Precomputed factor turning standard normals into load increments.
#[derive(Debug, Clone)]
pub struct NoiseSampler {
    n: usize,
    latent: usize,
    factor: Factor,
}

impl NoiseSampler {
    pub fn new(model: &NoiseModel, sys: &DiscreteSystem) -> Result<Self> {
        let n = sys.n_dofs();
        match model {
            NoiseModel::White => Ok(Self { n, latent: n, factor: Factor::Mass(noise_covariance_factor(sys)?) }),
            NoiseModel::Colored(c) => {
                let mesh = sys
                    .mesh()
                    .ok_or_else(|| Error::InvalidParameter("colored noise needs a meshed system".into()))?;
                let weights = sys.weights();
                let nodes = mesh.interior_nodes() + 2;
                let blocks = (0..mesh.graph().n_edges())
                    .map(|j| {
                        let scale = (2.0 * weights[j]).sqrt();
                        let mut coeffs = Vec::with_capacity(nodes * c.modes);
                        for l in 0..nodes {
                            for k in 1..=c.modes {
                                let r = c.amplitude * (k as f64).powf(-c.decay);
                                coeffs.push(r * scale * sine_hat_integral(k, l, nodes, mesh.h()));
                            }
                        }
                        ColoredBlock { dofs: (0..nodes).map(|l| mesh.dof(j, l)).collect(), coeffs }
                    })
                    .collect::<Vec<_>>();
                Ok(Self { n, latent: blocks.len() * c.modes, factor: Factor::Colored { blocks, modes: c.modes } })
            }
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Number of standard normals consumed per increment.
    pub fn latent_dim(&self) -> usize {
        self.latent
    }

    /// `out = B z` where `B Bᵀ` is the increment covariance per unit time.
    pub fn apply_factor(&self, z: &[f64], out: &mut [f64]) {
        match &self.factor {
            Factor::Mass(f) => f.apply_into(z, out),
            Factor::Colored { blocks, modes } => {
                out.iter_mut().for_each(|v| *v = 0.0);
                for (j, b) in blocks.iter().enumerate() {
                    let zj = &z[j * modes..(j + 1) * modes];
                    for (l, &dof) in b.dofs.iter().enumerate() {
                        let row = &b.coeffs[l * modes..(l + 1) * modes];
                        out[dof] += row.iter().zip(zj).map(|(c, z)| c * z).sum::<f64>();
                    }
                }
            }
        }
    }

    /// Standard normals of step `step` of trajectory `trajectory`.
    pub fn latent_into(&self, seed: u64, trajectory: u64, step: u64, z: &mut [f64]) {
        fill_standard_normal(&mut step_rng(seed, trajectory, step), z);
    }

    pub fn increment_into(&self, seed: u64, trajectory: u64, step: u64, dt: f64, z: &mut [f64], out: &mut [f64]) {
        self.latent_into(seed, trajectory, step, z);
        let s = dt.sqrt();
        z.iter_mut().for_each(|v| *v *= s);
        self.apply_factor(z, out);
    }

    /// Sum of the `count` fine increments starting at fine step `first`, each of length `dt_fine`.
    pub fn aggregated_into(
        &self,
        seed: u64,
        trajectory: u64,
        first: u64,
        count: u64,
        dt_fine: f64,
        z: &mut [f64],
        out: &mut [f64],
    ) {
        let mut acc = vec![0.0; self.latent];
        for step in first..first + count {
            self.latent_into(seed, trajectory, step, z);
            acc.iter_mut().zip(z.iter()).for_each(|(a, v)| *a += v);
        }
        let s = dt_fine.sqrt();
        acc.iter_mut().for_each(|v| *v *= s);
        self.apply_factor(&acc, out);
    }

    /// Dense covariance per unit time (`G` or `G_R`).
    pub fn covariance(&self) -> DMatrix<f64> {
        let b = self.factor_dense();
        &b * b.transpose()
    }

    pub fn trace(&self) -> f64 {
        self.factor_dense().iter().map(|v| v * v).sum()
    }

    fn factor_dense(&self) -> DMatrix<f64> {
        let mut b = DMatrix::zeros(self.n, self.latent);
        let mut e = vec![0.0; self.latent];
        let mut col = vec![0.0; self.n];
        for c in 0..self.latent {
            e[c] = 1.0;
            self.apply_factor(&e, &mut col);
            b.set_column(c, &nalgebra::DVector::from_column_slice(&col));
            e[c] = 0.0;
        }
        b
    }
}

/// One load increment `ΔW` for `(seed, trajectory, step)`.
pub fn sample_noise_increment(sampler: &NoiseSampler, seed: u64, trajectory: u64, step: u64, dt: f64) -> Vec<f64> {
    let mut z = vec![0.0; sampler.latent_dim()];
    let mut out = vec![0.0; sampler.dim()];
    sampler.increment_into(seed, trajectory, step, dt, &mut z, &mut out);
    out
}
