use thiserror::Error;

/// Errors produced by the simulation and analysis routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    /// The Fock truncation is too small for the requested state.
    #[error("truncation inadequate: tail population {tail:.3e} exceeds {tol:.1e} at dim {dim}; increase the Fock dimension")]
    Truncation { dim: usize, tail: f64, tol: f64 },

    #[error("resource cap exceeded: {0}")]
    ResourceCap(String),

    #[error("steady state is degenerate (kernel multiplicity {multiplicity})")]
    DegenerateSteadyState { multiplicity: usize },

    #[error("eigen solver did not converge: {reason} (max residual {residual:.3e})")]
    NoConvergence { reason: String, residual: f64 },

    #[error("record too short: need at least {required} samples, have {available}")]
    InsufficientData { required: usize, available: usize },

    /// The retained Liouvillian modes miss part of the correlator weight.
    #[error("mode set too small: excluded weight {excluded:.3e} vs included {included:.3e}; request more modes")]
    InsufficientModes { excluded: f64, included: f64 },

    #[error("trajectory {index}: {source}")]
    Trajectory {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("linear algebra: {0}")]
    Linalg(#[from] ndarray_linalg::error::LinalgError),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
