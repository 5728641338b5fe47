use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("root not bracketed: f({lo}) = {f_lo}, f({hi}) = {f_hi}")]
    Bracket { lo: f64, hi: f64, f_lo: f64, f_hi: f64 },

    #[error("root finder did not converge in {iterations} iterations, last bracket [{lo}, {hi}]")]
    Convergence { iterations: usize, lo: f64, hi: f64 },

    #[error("singular system: {0}")]
    Singular(String),

    #[error("strategy `{tag}` is not admissible at step {step} (t = {t})")]
    Inadmissible { tag: String, step: usize, t: f64 },

    #[error("non-finite state at step {step} (t = {t}): {what}")]
    NonFinite { step: usize, t: f64, what: String },
}

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}
