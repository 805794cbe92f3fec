use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("invalid frequency distribution: {0}")]
    InvalidDistribution(String),

    #[error("distribution is not symmetric; the operation requires a centered symmetric law")]
    NotSymmetric,

    #[error("integrand is not finite at quadrature node omega = {node} (value {value})")]
    NonFiniteIntegrand { node: f64, value: f64 },

    #[error("z = {re} + {im}i lies outside the strip -sigma^2/2 < Re z < gamma")]
    OutsideStrip { re: f64, im: f64 },

    #[error(
        "HJB Newton iteration did not converge at omega = {omega} after {iterations} iterations \
         (residual {residual:.3e})"
    )]
    NewtonDiverged {
        omega: f64,
        iterations: usize,
        residual: f64,
    },

    #[error("invariant density has a negative value {min:.3e}")]
    NegativeDensity { min: f64 },

    #[error("1 - kappa P(z)/2 nearly vanishes on the contour (min modulus {min_modulus:.3e})")]
    ZeroOnContour { min_modulus: f64 },

    #[error("winding integral {value} is not close to an integer; enlarge the contour height")]
    NonIntegerWinding { value: f64 },

    #[error("linear system is singular to working precision (|det| = {det:.3e})")]
    SingularSystem { det: f64 },

    #[error("Laplace truncation tail bound {bound:.3e} exceeds tolerance; increase the horizon")]
    TruncatedTail { bound: f64 },

    #[error("Penrose condition fails: {zeros} zero(s) of 1 - kappa P/2 in the strip")]
    PenroseViolated { zeros: i64 },

    #[error("Picard iteration stagnated after {} sweeps (last residual {:.3e})", .history.len(), .history.last().copied().unwrap_or(f64::NAN))]
    PicardStagnation { history: Vec<f64> },

    #[error("not enough usable points for a decay fit ({usable} < 8)")]
    InsufficientData { usable: usize },
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
