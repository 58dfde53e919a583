use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("rank mismatch: {0} vs {1}")]
    RankMismatch(usize, usize),
    #[error("division by zero")]
    DivisionByZero,
    #[error("not invertible: {0}")]
    NotInvertible(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("index out of range: {0}")]
    Index(String),
    #[error("coefficient z^{want} not determined (series known up to z^{trunc})")]
    Truncation { want: i32, trunc: i32 },
    #[error("singular point: {0}")]
    Singular(String),
    #[error("invalid argument: {0}")]
    Invalid(String),
    #[error("data file {name}: {msg}")]
    Data { name: String, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
