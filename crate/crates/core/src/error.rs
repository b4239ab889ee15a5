//! Error types shared across the library.
//!
//! Every fallible operation returns [`Error`]. Numerical failures carry the
//! location (in the light-cone coordinate xi) at which they were detected so
//! callers can re-seed or shrink their domain.

/// Library-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// A tabulated profile function was queried outside its knot range.
    /// Tables never extrapolate.
    #[error("xi = {xi} outside table domain [{min}, {max}]")]
    TableDomain { xi: f64, min: f64, max: f64 },

    /// The longitudinal momentum function p(xi) = lambda - g(xi) dropped
    /// below the turning-point threshold. The parameterization by xi is
    /// invalid at and beyond such a point.
    #[error("turning point: |p| < {threshold} at xi = {xi}")]
    TurningPoint { xi: f64, threshold: f64 },

    /// Adaptive step control drove the step size below the representable
    /// minimum without meeting the error tolerance.
    #[error("step size underflow at xi = {xi} (h = {step})")]
    StepFailure { xi: f64, step: f64 },

    /// The integrator exceeded its step budget.
    #[error("step budget of {max_steps} exhausted at xi = {xi}")]
    MaxStepsExceeded { xi: f64, max_steps: usize },

    /// det Z crossed the singularity threshold (a caustic of the ray
    /// bundle). Solutions can be re-seeded beyond the caustic.
    #[error("det Z vanished at xi = {xi} (caustic)")]
    SingularZ { xi: f64 },

    /// Z' Z^-1 lost symmetry beyond tolerance, meaning the seed matrices
    /// were inconsistent or the integration degraded.
    #[error("Z'Z^-1 symmetry violated at xi = {xi}: residual {residual}")]
    SymmetryViolation { xi: f64, residual: f64 },

    /// The closed-form oscillating solution divides by Omega and is not
    /// usable near Omega = 0; use the dedicated limit form instead.
    #[error("Omega = {omega} too close to zero for the oscillating closed form")]
    DegenerateOmega { omega: f64 },

    /// A state or matrix stopped being finite during integration.
    #[error("non-finite value encountered at xi = {xi}")]
    NonFinite { xi: f64 },

    /// Adaptive quadrature could not reach the requested tolerance.
    #[error("quadrature failed on [{a}, {b}]: estimated error {estimate}")]
    QuadratureFailure { a: f64, b: f64, estimate: f64 },

    /// A profile, parameter set, or request violates a documented
    /// precondition.
    #[error("invalid input: {0}")]
    Invalid(String),

    /// The requested static transverse equilibrium does not exist for the
    /// given field constants (the quadratic form is not negative definite).
    #[error("no static transverse minimum: {reason}")]
    NoStaticMinimum { reason: String },

    /// Configuration parsing or validation failure.
    #[error("config: {0}")]
    Config(String),

    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Config(e.to_string())
    }
}

impl Error {
    /// True for failures of the numerics (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::TurningPoint { .. }
                | Error::StepFailure { .. }
                | Error::MaxStepsExceeded { .. }
                | Error::SingularZ { .. }
                | Error::SymmetryViolation { .. }
                | Error::NonFinite { .. }
                | Error::QuadratureFailure { .. }
        )
    }
}
