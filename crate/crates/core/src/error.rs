use thiserror::Error;

/// Errors raised by the numerical routines of this crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("circulant embedding has eigenvalue {value:e} below tolerance -{tol:e}")]
    NegativeEigenvalue { value: f64, tol: f64 },

    #[error("time {t} outside trajectory domain [0, {horizon}]")]
    OutOfDomain { t: f64, horizon: f64 },

    #[error("only {found} tabulated radii in [{lo}, {hi}], need at least {needed}")]
    GridTooCoarse {
        found: usize,
        needed: usize,
        lo: f64,
        hi: f64,
    },

    #[error("radius grids do not line up: {0}")]
    GridMismatch(String),

    #[error("quadrature did not reach relative tolerance {rel_tol:e} ({context})")]
    ToleranceNotMet { rel_tol: f64, context: String },

    #[error("heat kernel evaluated at non-positive time {0}")]
    NonpositiveTime(f64),

    #[error("evaluation point coincides with the singular point")]
    AtSingularPoint,

    #[error("unsupported initial data: {0}")]
    UnsupportedInitialData(String),

    #[error("fit window holds {found} radii, need at least {needed}")]
    DegenerateWindow { found: usize, needed: usize },

    #[error("non-positive mass {mass:e} at radius {radius:e}")]
    NonpositiveMass { radius: f64, mass: f64 },

    #[error("Hölder exponent {alpha} outside ({lo}, 1): removability cannot be judged from ball mass")]
    AlphaOutOfRange { alpha: f64, lo: f64 },

    #[error("ensemble of {found} paths is too small, need at least {needed}")]
    EnsembleTooSmall { found: usize, needed: usize },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
