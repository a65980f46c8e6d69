use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parameter out of domain: {0}")]
    Domain(String),
    #[error("demand elasticity {0} is not above one; markup is unbounded")]
    UnboundedMarkup(f64),
    #[error("pass-through denominator 1+Γ+Λ = {0} is not positive")]
    SingularPassthrough(f64),
    #[error("outside option infeasible: {0}")]
    InfeasibleOutsideOption(String),
    #[error("invalid network: {0}")]
    Network(String),
    #[error("{what} did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence {
        what: String,
        iterations: usize,
        residual: f64,
    },
    #[error("invalid data: {0}")]
    Data(String),
    #[error("rank deficient design: {0}")]
    RankDeficient(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}
