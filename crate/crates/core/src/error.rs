use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid scenario: {}", .0.join("; "))]
    InvalidScenario(Vec<String>),

    #[error("invalid distance interval [{lo}, {hi}] m")]
    InvalidInterval { lo: f64, hi: f64 },

    #[error("distance must be positive, got {0} m")]
    NonPositiveDistance(f64),

    #[error("relay mode inadmissible: a_fm={a_fm}, a_mk={a_mk}, a_fk={a_fk}")]
    RelayInadmissible { a_fm: f64, a_mk: f64, a_fk: f64 },

    #[error("power multiplier tau must be positive (unbounded water level), got {0}")]
    UnboundedWaterLevel(f64),

    #[error("score matrix must be square: {rows} rows, row {row} has {cols} columns")]
    NonSquare { rows: usize, row: usize, cols: usize },

    #[error("band restriction leaves cell {cell} without any band")]
    EmptyBandSet { cell: usize },

    #[error("instance too large for the exhaustive oracle: {what} = {value} exceeds {limit}")]
    InstanceTooLarge {
        what: &'static str,
        value: usize,
        limit: usize,
    },

    #[error("config parse error: {0}")]
    Config(#[from] toml::de::Error),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
