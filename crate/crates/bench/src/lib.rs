//! Fixtures shared by the criterion benches.

use netac::noise::NoiseModel;
use netac::{
    allen_cahn_drift, assemble_form, build_edge_fields, build_graph, build_mesh, DiffusionSpec, DiscreteSystem,
    EdgeField, EdgeFieldSet, Mesh, Run, SolverConfig, StateVector, VertexMatrix,
};

/// Star with three arms and a strict-profile vertex matrix.
pub fn star(n_int: usize) -> (Mesh, EdgeFieldSet, VertexMatrix) {
    let g = build_graph(4, &[(1, 2), (1, 3), (1, 4)]).expect("star graph");
    let mesh = build_mesh(&g, n_int).expect("mesh");
    let fields = build_edge_fields(
        vec![EdgeField::uniform(1.0, 0.0, 1.0), EdgeField::uniform(2.0, 0.5, 1.0), EdgeField::uniform(0.5, 0.0, 2.0)],
        &mesh,
    )
    .expect("fields");
    let m = VertexMatrix::from_rows(&[
        vec![-1.5, 0.5, 0.5, 0.5],
        vec![0.5, -0.5, 0.0, 0.0],
        vec![0.5, 0.0, -0.5, 0.0],
        vec![0.5, 0.0, 0.0, -0.5],
    ])
    .expect("vertex matrix");
    (mesh, fields, m)
}

pub fn star_system(n_int: usize) -> DiscreteSystem {
    let (mesh, fields, m) = star(n_int);
    assemble_form(&mesh, &fields, &m).expect("assembly")
}

/// Stochastic Allen–Cahn run on the star with additive white noise.
pub fn allen_cahn_run(n_int: usize, noise: NoiseModel) -> Run {
    let (mesh, fields, m) = star(n_int);
    let (drift, shifted) = allen_cahn_drift(&[1.0, 0.8, 1.2], &fields).expect("drift");
    let system = assemble_form(&mesh, &shifted, &m).expect("assembly");
    let n = system.n_dofs();
    Run {
        system,
        drift: Some(drift),
        diffusion: DiffusionSpec::additive(0.3, 3),
        noise,
        solver: SolverConfig::new(1e-3, 0.1).expect("solver").with_stride(10),
        initial: StateVector::constant(n, 0.5),
        seed: 1,
        config_hash: None,
    }
}
