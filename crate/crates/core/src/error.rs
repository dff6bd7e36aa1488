use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("momentum {k} is outside the radial domain (k_max = {k_max})")]
    OutOfDomain { k: f64, k_max: f64 },

    #[error("channel m = {0} is not supported by this operation")]
    UnsupportedChannel(i32),

    #[error("integration became unstable at t = {time}: {reason}")]
    Instability { time: f64, reason: String },

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("plaquette ({i}, {j}) has zero winding")]
    NoWinding { i: usize, j: usize },

    #[error("loop touches masked node ({i}, {j})")]
    MaskedLoop { i: usize, j: usize },

    #[error("config: {0}")]
    Config(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
