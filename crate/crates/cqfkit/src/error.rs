//! Error type shared by every module of the crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix contains non-finite entries")]
    NonFiniteEntries,

    #[error("matrix is not Hurwitz (spectral abscissa {abscissa:.6e} >= 0)")]
    NotHurwitz { abscissa: f64 },

    #[error("eigenvalue computation did not converge")]
    EigenFailure,

    #[error("matrix is not positive semidefinite (min eigenvalue {min_eig:.6e})")]
    NotPositiveSemidefinite { min_eig: f64 },

    #[error("dynamics matrix is defective: {0}")]
    DefectiveMatrix(String),

    #[error("tau = {tau} violates the admissibility bound {bound}")]
    TauTooLarge { tau: f64, bound: f64 },

    #[error("quadrature did not converge: {0}")]
    QuadratureNotConverged(String),

    #[error("monomial index length {got} does not match tensor degree {expected}")]
    DegreeMismatch { expected: usize, got: usize },

    #[error("mode sum needs {terms} terms, above the cost guard {max}")]
    TooManyTerms { terms: usize, max: usize },

    #[error("observer is not tau-admissible (tau = {tau}, bound {bound})")]
    NotAdmissible { tau: f64, bound: f64 },

    #[error("CCR matrix is singular")]
    SingularTheta,

    #[error("P22 block is singular; the coupling formula does not apply")]
    SingularP22,

    #[error("[Q,P]12 block is singular; the energy-matrix formula does not apply")]
    SingularCommutatorBlock,

    #[error("invalid specification for {field}: {reason}")]
    InvalidSpec { field: String, reason: String },

    #[error("initial observer is not admissible at tau = {tau}")]
    InitNotAdmissible { tau: f64 },

    #[error("line search found no descent step from the initial iterate")]
    NoDescentDirection,

    #[error("no bracketing interval for the coupling constraint: {0}")]
    NoBracket(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("config parse error: {0}")]
    ConfigParse(String),
}

impl Error {
    /// Field-path constructor used by config validation.
    pub fn invalid_spec(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidSpec {
            field: field.into(),
            reason: reason.into(),
        }
    }
}
