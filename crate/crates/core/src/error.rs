use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("at least {needed} studies are required, got {got}")]
    TooFewStudies { needed: usize, got: usize },

    #[error("{method} is unavailable: {reason}")]
    MethodUnavailable { method: &'static str, reason: String },

    /// `1 - h_k <= 0` in the Sidik-Jonkman correction.
    #[error("degenerate leverage for study {study} ({label}): 1 - h = {one_minus_h}")]
    DegenerateLeverage {
        study: usize,
        label: String,
        one_minus_h: f64,
    },

    #[error("degenerate spectrum: {zeros} eigenvalues below the drop threshold (expected 1)")]
    DegenerateSpectrum { zeros: usize },

    #[error(
        "weighted chi-square series did not converge after {terms} terms \
         (partial sum {partial}, error bound {bound})"
    )]
    NotConverged {
        partial: f64,
        bound: f64,
        terms: usize,
    },

    #[error("could not bracket H(tau2) = {u}: H({hi}) = {h_hi} after expansion")]
    BracketFailure { u: f64, hi: f64, h_hi: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
