use thiserror::Error;

use crate::trace_space::Role;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("spheres {i} and {j} overlap or touch (gap = {gap})")]
    Overlap { i: usize, j: usize, gap: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("grid too coarse: {n_theta} polar nodes cannot resolve degree {ell_max}")]
    GridTooCoarse { n_theta: usize, ell_max: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("expected a {expected:?} coefficient set, got {found:?}")]
    RoleMismatch { expected: Role, found: Role },

    #[error("target point lies inside source sphere {sphere}")]
    DivergenceGuard { sphere: usize },

    #[error("point {point:?} lies on the surface of sphere {sphere}")]
    PointOnBoundary { sphere: usize, point: [f64; 3] },

    #[error("every dielectric constant must differ from the exterior one (sphere {sphere} does not)")]
    DegenerateKappa { sphere: usize },

    #[error("GMRES did not converge after {iterations} iterations (relative residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("charge sum rule violated on sphere {sphere} (deviation {deviation:.3e})")]
    ChargeSumRule { sphere: usize, deviation: f64 },

    #[error("GMRES breakdown at iteration {0}")]
    Breakdown(usize),

    #[error("dense system of dimension {dim} exceeds the guard rail of {limit}")]
    GuardRail { dim: usize, limit: usize },

    #[error("dense matrix is singular")]
    SingularMatrix,

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed input: {0}")]
    Format(String),
}

impl Error {
    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Format(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Format(e.to_string())
    }
}
