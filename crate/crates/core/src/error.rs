use std::fmt;

use thiserror::Error;

/// Pipeline stage of the spectral layer where a non-finite value first appeared.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    PreFft,
    Fft,
    Contraction,
    Ifft,
    Skip,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::PreFft => "pre_fft",
            Stage::Fft => "fft",
            Stage::Contraction => "contraction",
            Stage::Ifft => "ifft",
            Stage::Skip => "skip",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite input {value} ({context})")]
    NonFinite { value: f64, context: String },

    #[error("invalid precision token `{0}`")]
    InvalidPrecision(String),

    #[error("invalid precision system: {0}")]
    InvalidSystem(String),

    #[error("exact arithmetic has no finite epsilon")]
    NoFiniteEpsilon,

    #[error("grid d={d}, m={m} is too large to address")]
    GridTooLarge { d: usize, m: usize },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("test function returned non-finite value at anchor {index}")]
    NonFiniteSample { index: usize },

    #[error("overflow in transform at frequency {omega:?}")]
    TransformOverflow { omega: Vec<i64> },

    #[error("overflow in inverse transform at anchor {index}")]
    InverseOverflow { index: usize },

    #[error("fast transform requires a power-of-two grid (m={0}); use dft instead")]
    NotPowerOfTwo(usize),

    #[error("invalid mode mask: {0}")]
    InvalidMask(String),

    #[error("einsum: {0}")]
    Einsum(String),

    #[error("overflow in contraction step {step}")]
    ContractionOverflow { step: usize },

    #[error("non-finite value at stage {stage}")]
    NonFiniteStage { stage: Stage },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("quadrature: {0}")]
    Quadrature(String),

    #[error("{0}")]
    Unsupported(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
