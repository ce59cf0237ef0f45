use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("input shape mismatch: {0}")]
    InputShape(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("model invalid: {0}")]
    ModelInvalid(String),

    #[error("eigensolver did not converge after {iterations} iterations (bracket width {bracket:e})")]
    EigenNonConvergence { iterations: usize, bracket: f64 },

    #[error("propagation unstable at t = {time}: norm drift {drift:e}; reduce dt")]
    Instability { time: f64, drift: f64 },

    #[error("Ermakov width collapsed at t = {time} (a = {width:e})")]
    Singularity { time: f64, width: f64 },

    #[error("quadrature did not converge at r = {r}, t = {time}: relative change {change:e} with {panels} panels")]
    Quadrature {
        r: f64,
        time: f64,
        change: f64,
        panels: usize,
    },

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("unsupported scope: {0}")]
    UnsupportedScope(String),

    #[error("equal-time derivative K is singular at slice {slice}")]
    SingularKernel { slice: usize },

    #[error("density change is inconsistent with a causal drive (residual {residual:e})")]
    Inconsistent { residual: f64 },

    #[error("Dyson iteration diverged at slice {slice}: spectral radius estimate {spectral_radius:.3}")]
    Divergence { slice: usize, spectral_radius: f64 },

    #[error("finite-difference step {eps:e} is below the noise floor (relative change {change:e})")]
    StepSize { eps: f64, change: f64 },

    #[error("tail condition violated: n(r_max)/max n = {ratio:e} (limit {limit:e})")]
    GridTail { ratio: f64, limit: f64 },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures of the numerics themselves (as opposed to bad input).
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::EigenNonConvergence { .. }
                | Error::Instability { .. }
                | Error::Singularity { .. }
                | Error::Quadrature { .. }
                | Error::SingularKernel { .. }
                | Error::Inconsistent { .. }
                | Error::Divergence { .. }
                | Error::StepSize { .. }
        )
    }
}
