use thiserror::Error;

use crate::partition::{Regime, Violation};

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("device `{device}` does not support the {regime} regime")]
    UnsupportedRegime { device: String, regime: Regime },

    #[error("partition size {size} is not valid on `{device}` (valid: {valid:?})")]
    InvalidSize {
        device: String,
        size: u32,
        valid: Vec<u32>,
    },

    #[error("invalid partition plan: {}", format_violations(.0))]
    InvalidPlan(Vec<Violation>),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("calibration failed for {model}: best relative residual {best_residual:.4}")]
    Calibration { model: String, best_residual: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("search failed: {0}")]
    SearchFailed(String),

    #[error("executor failure during batch: {0}")]
    Batch(String),

    #[error("parse error in {location}: {message}")]
    Parse { location: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn parse(location: impl Into<String>, message: impl ToString) -> Self {
        Error::Parse {
            location: location.into(),
            message: message.to_string(),
        }
    }
}

fn format_violations(v: &[Violation]) -> String {
    v.iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}
