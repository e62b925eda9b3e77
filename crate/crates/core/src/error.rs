use thiserror::Error;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument is outside the domain where the model is defined.
    #[error("domain error: {0}")]
    Domain(String),

    /// Input data failed a consistency or physicality check.
    #[error("validation error: {0}")]
    Validation(String),

    #[error("undefined CAR (zero accidentals)")]
    ZeroAccidentals,

    /// Coincidences do not exceed accidentals, so no pair signal can be extracted.
    #[error("no pair signal: coincidences ({coincidences}) do not exceed accidentals ({accidentals})")]
    NoPairSignal { coincidences: f64, accidentals: f64 },

    /// A linear system or design matrix is rank deficient.
    #[error("singular system: {0}")]
    Singular(String),

    /// An iterative fit did not converge.
    #[error("fit did not converge after {iterations} iterations (chi2 = {chi2:.6e}, gradient norm = {gradient:.3e})")]
    NoConvergence {
        iterations: usize,
        chi2: f64,
        gradient: f64,
    },

    /// Malformed file or text input.
    #[error("parse error{}: {message}", line.map(|l| format!(" at line {l}")).unwrap_or_default())]
    Parse { line: Option<usize>, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Short machine-readable tag of the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Domain(_) => "domain",
            Error::Validation(_) => "validation",
            Error::ZeroAccidentals => "zero_accidentals",
            Error::NoPairSignal { .. } => "no_pair_signal",
            Error::Singular(_) => "singular",
            Error::NoConvergence { .. } => "no_convergence",
            Error::Parse { .. } => "parse",
            Error::Io(_) => "io",
        }
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub(crate) fn parse(line: Option<usize>, msg: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: msg.into(),
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::parse(Some(e.line()), e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        let line = e.position().map(|p| p.line() as usize);
        Error::parse(line, e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
