//! Evaluation harness: the three task metrics, checkpoint-series
//! evaluation, the poverty-of-the-stimulus experiment runner, one-knob
//! sweeps with correlation/slope analysis, and SVG reporting.

pub mod evaluate;
pub mod experiment;
pub mod metrics;
pub mod report;
pub mod sweep;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("prediction/reference counts differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("empty checkpoint series")]
    EmptySeries,
    #[error("metric needs field '{0}' in the example metadata")]
    MissingMeta(&'static str),
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Data(#[from] syntrans_core::data::DataError),
    #[error(transparent)]
    Tokenizer(#[from] syntrans_core::tokenizer::TokenizerError),
    #[error(transparent)]
    Stats(#[from] syntrans_core::stats::StatsError),
    #[error(transparent)]
    Model(#[from] syntrans_model::ModelError),
    #[error(transparent)]
    Train(#[from] syntrans_model::train::TrainError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
