use thiserror::Error;

/// Errors produced by the synthesis, robustness and simulation routines.
#[derive(Debug, Error)]
pub enum Error {
    /// A structural input (block sizes, matrix shapes, mask membership) is malformed.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// An argument is outside the domain of the operation (Θ ≤ 0, γ ∉ (0,1), ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// A built-in perturbation was constructed with an amplitude exceeding its declared bound.
    #[error("perturbation entry ({row},{col}) has amplitude {value} exceeding bound {bound}")]
    BoundExceeded {
        row: usize,
        col: usize,
        value: f64,
        bound: f64,
    },

    /// The Θ root could not be bracketed inside [1e-30, 1e30].
    #[error("controllability function root not bracketed (last probe Θ = {last_probe:e})")]
    ThetaBracket { last_probe: f64 },

    /// The Θ root was bracketed but the final residual is too large.
    #[error("controllability function residual {residual:e} exceeds tolerance at Θ = {theta}")]
    ThetaResidual { theta: f64, residual: f64 },

    /// The initial state lies outside the solvability ellipsoid.
    #[error("initial point outside solvability ellipsoid: Θ(x0) = {theta0} > c = {c}")]
    OutsideDomain { theta0: f64, c: f64 },

    /// A matrix that must be invertible or positive definite is not.
    #[error("singular or indefinite matrix: {0}")]
    Singular(String),

    /// An iterative eigenvalue routine failed to converge.
    #[error("{method} did not converge after {iterations} iterations (last change {last_change:e})")]
    NoConvergence {
        method: &'static str,
        iterations: usize,
        last_change: f64,
    },

    /// The ODE integrator could not make progress.
    #[error("integrator step size underflow at t = {t} (h = {h:e}, Θ = {theta:e})")]
    StepUnderflow { t: f64, h: f64, theta: f64 },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
