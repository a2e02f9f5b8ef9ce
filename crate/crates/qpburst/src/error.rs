use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("config: missing field `{0}`")]
    MissingField(String),
    #[error("config: {field} out of range: {reason}")]
    Range { field: String, reason: String },
    #[error("config parse: {0}")]
    Parse(String),
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("size: {0}")]
    Size(String),
    #[error("empty input: {0}")]
    Empty(String),
    #[error("quadrature did not converge: value {value:e}, error estimate {error:e} after {subdivisions} subdivisions")]
    Quadrature {
        value: f64,
        error: f64,
        subdivisions: usize,
    },
    #[error("step size underflow at t = {t:e} s (h = {h:e})")]
    Stiffness { t: f64, h: f64, last_good: Vec<f64> },
    #[error("convergence: {0}")]
    Convergence(String),
    #[error("coverage: {0}")]
    Coverage(String),
    #[error("format: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn range(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Range {
            field: field.into(),
            reason: reason.into(),
        }
    }

    /// Coarse classification used by the CLI for exit codes.
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Io(e) if e.kind() == std::io::ErrorKind::NotFound => ErrorClass::MissingInput,
            Error::Quadrature { .. } | Error::Stiffness { .. } | Error::Convergence(_) => {
                ErrorClass::Numerical
            }
            Error::Io(_) => ErrorClass::MissingInput,
            _ => ErrorClass::Validation,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    MissingInput,
    Validation,
    Numerical,
}

pub type Result<T> = std::result::Result<T, Error>;
