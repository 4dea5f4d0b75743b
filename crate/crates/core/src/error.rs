use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    /// `omega - H_R` has no usable inverse at this frequency.
    #[error("omega = {omega} is (numerically) an eigenvalue of H_R (rcond = {rcond:e})")]
    SingularAtFrequency { omega: f64, rcond: f64 },

    #[error("model has no steady state: max Im eigenvalue of H_R is {max_im:e}")]
    UnstableModel { max_im: f64 },

    /// The probe frequency sits on the Bloch loop, where the winding is undefined.
    #[error("gap closes at omega = {omega} (gap = {gap:e}); winding undefined")]
    CriticalPoint { omega: f64, gap: f64 },

    #[error("fitted susceptibility lines are parallel; no crossing")]
    NoCrossing,

    #[error("crossing frequency {beta} lies outside the scanned window [{min}, {max}]")]
    CrossingOutsideWindow { beta: f64, min: f64, max: f64 },

    #[error("Fock cutoff {cutoff} too small: raising it changes the covariance by {change:.3e}")]
    CutoffTooSmall { cutoff: usize, change: f64 },

    #[error("Lindbladian kernel is degenerate ({0})")]
    DegenerateSteadyState(String),

    #[error("operation requires open boundary conditions")]
    PeriodicBoundary,

    #[error("numerical routine did not converge: {0}")]
    NotConverged(String),
}
