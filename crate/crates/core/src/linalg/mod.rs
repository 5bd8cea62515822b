//! Sparse storage and direct solvers used by the assembly and the stepper.

mod skyline;
mod sparse;

pub use skyline::SkylineCholesky;
pub use sparse::CsrMatrix;

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn max_abs(a: &[f64]) -> f64 {
    a.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}
