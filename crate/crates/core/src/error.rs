use thiserror::Error;

/// Errors surfaced by the numerical pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("incompatible grids: {0:?} vs {1:?}")]
    GridMismatch(crate::fields::Grid, crate::fields::Grid),
    #[error("series coefficient spaces are incompatible: {0}")]
    SeriesMismatch(String),
    #[error("leading coefficient is not invertible")]
    NonInvertibleLeading,
    #[error("requested max frequency {max_freq} exceeds the dealiasing budget of an n={n} grid")]
    FrequencyTooLarge { max_freq: usize, n: usize },
    #[error("almost complex structure rejected: {0}")]
    StructureRejected(String),
    #[error("tangent projection failed after {0} redraws")]
    TangentProjectionFailed(usize),
    #[error("Hermitian frame is degenerate: min |det h| = {0:.3e}")]
    DegenerateFrame(f64),
    #[error("Fedosov recursion residual {residual:.3e} at degree {degree} exceeds {tol:.3e}")]
    RecursionResidual { degree: usize, residual: f64, tol: f64 },
    #[error("input to the flat-connection inverse is not closed: residual {0:.3e}")]
    NotClosed(f64),
    #[error("degree cap {cap} is too small for nu-order {nu_order}")]
    CapTooSmall { cap: usize, nu_order: usize },
    #[error("mixed antisymmetric degrees in graded commutator")]
    MixedFormDegree,
    #[error("trace density system stayed ill-conditioned (sigma_min/sigma_max = {0:.3e})")]
    IllConditioned(f64),
    #[error("Hamiltonian must have zero mean, got integral {0:.3e}")]
    NonZeroMean(f64),
    #[error("unknown check name: {0}")]
    UnknownCheck(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
