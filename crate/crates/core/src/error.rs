use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("non-finite entry in {0}")]
    NonFinite(&'static str),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("polar projection undefined: matrix is rank deficient (σ_min/σ_max = {ratio:e})")]
    SingularProjection { ratio: f64 },

    #[error("matrix does not lie on St({n},{k}): ‖XᵀX − I‖_F = {residual:e}")]
    NotOnManifold { n: usize, k: usize, residual: f64 },

    #[error("matrix is not tangent at the base point: ‖XᵀV + VᵀX‖_F = {residual:e}")]
    NotTangent { residual: f64 },

    #[error("tangent vectors are attached to different base points")]
    BaseMismatch,

    #[error("matrix is not antisymmetric: ‖A + Aᵀ‖_F = {residual:e}")]
    NotAntisymmetric { residual: f64 },

    #[error("logarithm undefined: {reason}")]
    OutOfInjectivityRadius { reason: String },

    #[error("Fréchet mean did not converge after {iterations} iterations (residual {residual:e})")]
    MeanNotFound { iterations: usize, residual: f64 },

    #[error("need at least {needed} samples, got {got}")]
    InsufficientSample { needed: usize, got: usize },

    #[error("Monte Carlo regime unreliable at σ² = {sigma2}: rejected {rejected} of {attempted} draws")]
    UnreliableRegime {
        sigma2: f64,
        rejected: usize,
        attempted: usize,
    },

    #[error("{value} lies outside the η table range [{min}, {max}]")]
    Extrapolation { value: f64, min: f64, max: f64 },

    #[error("predicted variance {sigma2} exceeds the η table range")]
    VarianceOverflow { sigma2: f64 },

    #[error("trajectory aborted at step {step}: {source}")]
    AbortedTrajectory {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("measurement {index} failed after redraw: {source}")]
    MeasurementFailed {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{step} failed (seed {seed}): {source}")]
    Experiment {
        step: String,
        seed: u64,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("serialization: {0}")]
    Serde(String),

    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl Error {
    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }

    pub(crate) fn out_of_radius(reason: impl Into<String>) -> Self {
        Error::OutOfInjectivityRadius {
            reason: reason.into(),
        }
    }
}
