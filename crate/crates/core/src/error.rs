use thiserror::Error;

/// Errors raised by the numerical routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("conformal factor lost positivity (min sample {min:e}) at t = {t}")]
    PositivityLoss { min: f64, t: f64 },

    #[error("volume constraint violated: relative deviation {deviation:e}")]
    VolumeConstraint { deviation: f64 },

    #[error("step size underflow at t = {t} (last state {state:?})")]
    StepUnderflow { t: f64, state: Vec<f64> },

    #[error("no return to the section within t = {t_cap}")]
    NoReturn { t_cap: f64 },

    #[error("Newton iteration did not converge: residual history {history:?}")]
    NewtonDivergence { history: Vec<f64> },

    #[error("weight exponent {gamma} resonates with a Hessian weight {resonance}")]
    ResonantWeight { gamma: f64, resonance: f64 },

    #[error("forcing has a component along the kernel mode k = {k}")]
    KernelForcing { k: usize },

    #[error("fit window too small: {samples} samples, need at least {required}")]
    WindowTooSmall { samples: usize, required: usize },

    #[error("reduced functional is constant to quadrature noise in every sampled direction")]
    IntegrableWithinTolerance,

    #[error("Hessian is not symmetric (asymmetry {0:e})")]
    AsymmetricHessian(f64),

    #[error("run is not in the polynomial regime: {0}")]
    NotPolynomial(String),

    #[error("quadrature failed to reach tolerance (estimated error {0:e})")]
    Quadrature(f64),
}

pub type Result<T> = std::result::Result<T, Error>;
