use std::io;

use thiserror::Error;

use crate::svec::FeatureId;

#[derive(Debug, Error, PartialEq)]
pub enum VecError {
    #[error("feature ids not strictly increasing at {0}")]
    Unsorted(FeatureId),
    #[error("non-finite value at feature {0}")]
    NonFinite(FeatureId),
}

#[derive(Debug, Error)]
pub enum SketchError {
    #[error("sketch needs at least one row and one column (got {rows}x{width})")]
    Shape { rows: usize, width: usize },
    #[error("non-finite increment {delta} for feature {feature}")]
    NonFinite { feature: FeatureId, delta: f64 },
    #[error("bad checkpoint: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("non-finite gradient at step {step}")]
    NonFiniteGradient { step: u64 },
    #[error("{op} called on a {algo} trainer")]
    WrongAlgo { op: &'static str, algo: &'static str },
    #[error("invalid trainer config: {0}")]
    Config(String),
    #[error("label {label} invalid for {task}")]
    Label { label: f64, task: String },
    #[error("feature {id} outside dense dimension {dim}")]
    Dimension { id: FeatureId, dim: usize },
    #[error(transparent)]
    Sketch(#[from] SketchError),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("bad checkpoint: {0}")]
    Checkpoint(String),
}

#[derive(Debug, Error)]
pub enum DataError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(#[from] DataError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl BenchError {
    /// Process exit code for the CLI.
    pub fn exit_code(&self) -> i32 {
        match self {
            BenchError::Config(_) => 2,
            BenchError::Data(_) | BenchError::Io(_) => 3,
            BenchError::Train(TrainError::Config(_)) => 2,
            BenchError::Train(_) => 3,
        }
    }
}
