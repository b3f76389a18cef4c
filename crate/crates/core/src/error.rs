use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid ring parameters: {0}")]
    InvalidRing(String),

    #[error("expected {expected} coefficients, got {got}")]
    Length { expected: usize, got: usize },

    #[error("operands live in different rings")]
    ParamsMismatch,

    #[error("automorphism exponent {0} must be odd")]
    EvenExponent(u64),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("no automorphism key for theta = {0}")]
    MissingKey(u64),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("polynomial of degree {0} exceeds the factorization cap of {cap}", cap = crate::canon::FACTOR_DEGREE_CAP)]
    DegreeCap(usize),

    #[error("zero polynomial")]
    ZeroPolynomial,

    #[error("rational canonical form construction failed: {0}")]
    RcfDiagnostic(String),

    #[error("packing layout violated: {0}")]
    Layout(String),

    #[error("scaling: {0}")]
    Scaling(String),

    #[error("modulus overflow at step {step}: margin {margin:.4} >= 1")]
    Overflow { step: usize, margin: f64 },

    #[error("malformed data: {0}")]
    Format(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
