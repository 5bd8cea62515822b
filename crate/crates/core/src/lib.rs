//! Stochastic Allen–Cahn and polynomial reaction–diffusion equations on
//! finite metric graphs with continuity and Kirchhoff-type vertex conditions.
//!
//! The crate is organised bottom-up:
//!
//! - [`graph`]: the metric graph, incidence structure and vertex matrix `M`.
//! - [`coefficients`]: per-edge conductances, potentials, weights, polynomial
//!   drifts and diffusion coefficients, including the Allen–Cahn rewrite.
//! - [`discretization`]: P1 finite elements with shared vertex degrees of
//!   freedom, assembly of the mass matrix and of the bilinear form.
//! - [`semigroup`]: spectrum and action of the discrete semigroup, plus
//!   contraction and positivity certificates.
//! - [`noise`] and [`solver`]: white/colored noise increments and the
//!   semi-implicit (tamed) Euler–Maruyama stepper.
//! - [`analysis`]: Monte Carlo ensembles, Hölder exponent and strong order
//!   estimators, Kirchhoff residuals.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::too_many_arguments)]

pub mod analysis;
pub mod coefficients;
pub mod discretization;
pub mod error;
pub mod expr;
pub mod graph;
pub mod linalg;
pub mod noise;
pub mod report;
pub mod rng;
pub mod semigroup;
pub mod solver;

pub use coefficients::{
    allen_cahn_drift, build_edge_fields, AllenCahnSpec, DiffusionSpec, DriftSpec, EdgeField,
    EdgeFieldSet, Lattice, Profile, ScalarFn,
};
pub use discretization::{assemble_form, build_mesh, DiscreteSystem, MassKind, Mesh, Norm, StateVector};
pub use error::{Error, Result};
pub use graph::{build_graph, MetricGraph, VertexMatrix, VertexProfile};
pub use noise::NoiseModel;
pub use report::{Check, ValidationReport};
pub use semigroup::{generalized_eigs, semigroup_apply, SpectralData};
pub use solver::{Run, Scheme, SolverConfig, TrajectorySet};
