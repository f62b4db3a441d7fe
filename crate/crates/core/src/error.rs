use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors raised by the estimation toolkit.
#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("invalid parameter {theta:?} for {family}")]
    InvalidParameter { family: String, theta: Vec<f64> },

    #[error("observation {x} lies outside the support of {family}")]
    OutsideSupport { family: String, x: f64 },

    #[error("degenerate parametrization: {0}")]
    DegenerateParametrization(String),

    #[error("quadrature failed to converge within {max_nodes} nodes (last estimates {last:?} vs {previous:?})")]
    QuadratureFailure {
        max_nodes: usize,
        last: Vec<f64>,
        previous: Vec<f64>,
    },

    #[error("rank deficiency: {0}")]
    RankDeficiency(String),

    #[error("solver failed after {sweeps} sweeps: {reason}")]
    SolverFailure {
        sweeps: usize,
        reason: String,
        /// Maximal relative residual of the defining equations per sweep.
        history: Vec<f64>,
    },

    #[error("non-unique centering at {theta:?}; retry with theta perturbed by {suggested_shift:e}")]
    DegenerateCentering {
        theta: Vec<f64>,
        suggested_shift: f64,
    },

    #[error("unsupported dimension k = {0}: the exact total variation solution needs k = 1, use tv_by_reduction")]
    UnsupportedDimension(usize),

    #[error("no sign change of the relative MSE difference on [{r_lo}, {r_up}] (values {g_lo}, {g_up})")]
    NoCrossing {
        r_lo: f64,
        r_up: f64,
        g_lo: f64,
        g_up: f64,
    },

    #[error("invalid radius interval [{0}, {1}]")]
    InvalidInterval(f64, f64),

    #[error("invalid contamination bounds: {0}")]
    InvalidBounds(String),

    #[error("degenerate scale estimate: {0}")]
    DegenerateScale(String),

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("optimizer did not converge: {reason} (best {best:?})")]
    OptimizerFailure { reason: String, best: Vec<f64> },

    #[error("invalid start estimate {0:?}")]
    InvalidStart(Vec<f64>),

    #[error("invalid tangent: {0}")]
    InvalidTangent(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}
