use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("quadrature did not converge: last estimate {last}, previous estimate {previous}")]
    QuadratureNotConverged { last: String, previous: String },

    #[error("overlap vanishes (|<exp(i Psi)>| = {magnitude:e}); phase derivatives are undefined")]
    OverlapVanishes { magnitude: f64 },

    #[error("degenerate spectrum (delta_e = {delta_e:e}, e_minus = {e_minus:e})")]
    DegenerateSpectrum { delta_e: f64, e_minus: f64 },

    #[error("singular information matrix (eigenvalues {min_eigenvalue:e} .. {max_eigenvalue:e})")]
    SingularInformation { min_eigenvalue: f64, max_eigenvalue: f64 },

    #[error("oracle resolution too small: {0}")]
    Resolution(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("malformed pupil grid: {0}")]
    PupilFormat(String),

    #[error("malformed sweep config: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
