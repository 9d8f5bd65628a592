use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("non-finite value {value} at index {index}")]
    NonFinite { index: usize, value: f64 },
    #[error("value {value} is not representable in {format}")]
    NotRepresentable { value: f64, format: &'static str },
    #[error("layout error: {0}")]
    Layout(String),
    #[error("infeasible shard: {0}")]
    InfeasibleShard(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("calibration failed: {0}")]
    Calibration(String),
}
