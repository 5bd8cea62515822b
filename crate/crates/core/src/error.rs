use thiserror::Error;

use crate::expr::ExprError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("graph has no vertices")]
    NoVertices,
    #[error("edge list is empty")]
    EmptyEdgeList,
    #[error("vertex id {id} out of range 1..={n}")]
    VertexIdOutOfRange { id: usize, n: usize },
    #[error("edge {edge} is a loop at vertex {vertex}")]
    LoopEdge { edge: usize, vertex: usize },
    #[error("graph is disconnected: vertex {vertex} is unreachable from vertex 1")]
    DisconnectedGraph { vertex: usize },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("edge {edge}: weight must be positive, got {value}")]
    NonpositiveWeight { edge: usize, value: f64 },
    #[error("edge {edge}: conductance must be positive, got {value} at x = {x}")]
    NonpositiveConductance { edge: usize, x: f64, value: f64 },
    #[error("edge {edge}: potential must be nonnegative, got {value} at x = {x}")]
    NegativePotential { edge: usize, x: f64, value: f64 },
    #[error("edge {edge}: well parameter must be positive, got {value}")]
    NonpositiveBeta { edge: usize, value: f64 },
    #[error("mesh needs at least one interior node per edge, got {0}")]
    MeshTooCoarse(usize),
    #[error("factorization failed at pivot {pivot} (value {value})")]
    FactorizationFailure { pivot: usize, value: f64 },
    #[error("functions disagree at vertex {vertex}: {first} vs {second}")]
    VertexMismatch { vertex: usize, first: f64, second: f64 },
    #[error("linear solve failed: {0}")]
    LinearSolveFailure(String),
    #[error("blow-up at step {step} (t = {time}): sup norm {norm}")]
    BlowupDetected { step: usize, time: f64, norm: f64 },
    #[error("colored noise decay exponent must exceed 1/2, got {0}")]
    DecayTooSlow(f64),
    #[error("time step {dt} is not small against the smallest lag {lag}")]
    InsufficientResolution { dt: f64, lag: f64 },
    #[error("ladder has {len} points, at least {required} required")]
    LadderTooShort { len: usize, required: usize },
    #[error("invalid ladder: {0}")]
    InvalidLadder(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("spectral data is incomplete: {have} of {need} eigenpairs")]
    IncompleteSpectrum { have: usize, need: usize },
    #[error(transparent)]
    Expression(#[from] ExprError),
    #[error("trajectory {id}: {source}")]
    Trajectory {
        id: u64,
        #[source]
        source: Box<Error>,
    },
}
