use crate::geodesic::GeodesicResult;
use crate::jko::JkoTrajectory;

/// Crate-wide error type.
///
/// Infinite action values are *not* errors: `phi` and the action functionals
/// return `f64::INFINITY` where the model prescribes it. Errors are reserved
/// for violated preconditions and solver breakdown.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// An argument left the domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A particle configuration violates the minimal-gap constraint of the cone.
    #[error("cone violation: {0}")]
    ConeViolation(String),

    /// A time integrator could not take an admissible step.
    #[error("step failure: {0}")]
    StepFailure(String),

    /// The geodesic solver stopped above tolerance; the best path found so far
    /// is attached.
    #[error("geodesic solve did not converge (kkt residual {:.3e})", .0.solver_report.kkt_residual)]
    GeodesicNonConvergence(Box<GeodesicResult>),

    /// A minimizing-movement step stopped above tolerance; the partial
    /// trajectory up to the failing step is attached.
    #[error("jko step {step} did not converge (kkt residual {residual:.3e})")]
    JkoNonConvergence {
        step: usize,
        residual: f64,
        partial: Box<JkoTrajectory>,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
    pub fn cone(msg: impl Into<String>) -> Self {
        Error::ConeViolation(msg.into())
    }
}
