use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("no finite band for h = {0}")]
    NoFiniteBand(String),

    #[error("precondition failed: {0}")]
    Precondition(String),

    /// `F_h^(k)` left its domain at the given iterate.
    #[error("iterate {index} left the domain (value {value} is not above h(x)^2 = {floor})")]
    IterateDomain { index: usize, value: f64, floor: f64 },

    #[error("series did not converge within {0} terms")]
    NotConverged(usize),

    #[error("stage cap of {0} exceeded")]
    StageCap(usize),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("sampler is inactive (boundary already crossed)")]
    Inactive,
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}
