use thiserror::Error;

/// Errors raised by the numerical routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("tabulated density: {0}")]
    Tabulated(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("tail unfittable: only {count} composite samples beyond |z| = {threshold}; enlarge z_max or the sample count")]
    TailUnfittable { count: usize, threshold: f64 },

    #[error("non-finite kernel entry at ({row}, {col})")]
    NonFiniteKernel { row: usize, col: usize },

    #[error("power iteration did not converge after {iterations} iterations (residual {residual:e})")]
    EigenNotConverged { iterations: usize, residual: f64 },

    #[error("Cauchy fixed-point map did not converge after {0} iterations")]
    FixedPointNotConverged(usize),

    #[error("criterion not bracketed on [{lo}, {hi}]: values {f_lo} and {f_hi} have the same sign")]
    NotBracketed { lo: f64, hi: f64, f_lo: f64, f_hi: f64 },

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("free-energy run failed at sweep {sweep}: pool normalizer is {value}")]
    BadNormalizer { sweep: usize, value: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidParameter(msg.into()))
}
