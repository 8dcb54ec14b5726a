use thiserror::Error;

/// Errors produced anywhere in the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("not positive semidefinite (min eigenvalue {min_eigenvalue:.3e})")]
    NotPositiveSemidefinite { min_eigenvalue: f64 },

    #[error("population not positive definite (min eigenvalue {min_eigenvalue:.3e})")]
    PopulationNotPositiveDefinite { min_eigenvalue: f64 },

    #[error(
        "eigensolver did not converge at off-diagonal index {index} after {sweeps} sweeps"
    )]
    EighNonConvergence { index: usize, sweeps: usize },

    #[error(
        "fixed-point solver did not converge: residual {residual:.3e} after {iterations} iterations"
    )]
    SolverNonConvergence { residual: f64, iterations: usize },

    #[error("fixed-point iterate persistently left the upper half-plane")]
    SolverLeftHalfPlane,

    #[error(
        "companion transform left upper half-plane (Im z1 = {im:.3e}); \
         bandwidth may be too large or z too close to the support"
    )]
    CompanionLeftHalfPlane { im: f64 },

    #[error(
        "quadrature did not reach requested tolerance: achieved {achieved:.3e}, requested {requested:.3e}"
    )]
    QuadratureTolerance { achieved: f64, requested: f64 },

    #[error("density value {value:.3e} at x = {x} is negative beyond the clamp threshold")]
    NegativeDensity { value: f64, x: f64 },

    #[error("recovery fit residual {residual:.3e} exceeds cap {cap:.3e}")]
    RecoveryResidual { residual: f64, cap: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
