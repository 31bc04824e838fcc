use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unsupported spatial dimension {0} (expected 1 or 2)")]
    UnsupportedDimension(usize),

    #[error("point {point:?} lies outside [0, 2π]^d")]
    OutsideDomain { point: Vec<f64> },

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("{name} {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("noise eigenvalues have not been set on this basis")]
    SpectrumUnset,

    #[error("kernel Galerkin matrix is asymmetric (max deviation {max_dev:e})")]
    AsymmetricKernel { max_dev: f64 },

    #[error("solver did not converge after {iterations} iterations (best residual {best_residual:e})")]
    NonConvergence { iterations: usize, best_residual: f64 },

    #[error("Jacobian is singular at the current iterate")]
    SingularJacobian,

    #[error("gain function is not {0}")]
    UnsuitableGain(&'static str),

    #[error("rate value {value} at node {node} is outside the open range of the gain")]
    OutOfRange { node: usize, value: f64 },

    #[error("non-finite state at step {step}")]
    BlowUp { step: usize },

    #[error("every path was censored at t_max = {t_max} (epsilon = {epsilon})")]
    AllCensored { epsilon: f64, t_max: f64 },

    #[error("censoring fraction {fraction:.3} at epsilon = {epsilon} exceeds 0.5")]
    ExcessiveCensoring { epsilon: f64, fraction: f64 },

    #[error("noise eigenvalue of mode {mode} is zero; the rate function is undefined")]
    ZeroEigenvalue { mode: usize },

    #[error("potential is not a double well: {0}")]
    NotDoubleWell(String),

    #[error("exit radius {radius} leaves the basin of attraction: {reason}")]
    RadiusOutsideBasin { radius: f64, reason: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("{module}: {source}")]
    Context {
        module: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter { name, reason: reason.into() }
    }

    pub fn in_module(self, module: &'static str) -> Self {
        Error::Context { module, source: Box::new(self) }
    }

    /// The innermost error, skipping module context wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Context { source, .. } => source.root(),
            other => other,
        }
    }
}
