//! Feature selection in sublinear memory.
//!
//! Model weights live in a [`sketch::CountSketch`] and the heaviest features
//! are tracked by a [`topk::TopKHeap`]. The [`optim`] module trains them with
//! either sketched online L-BFGS (`bear`) or sketched SGD (`mission`), next to
//! dense SGD, dense online L-BFGS and feature-hashing baselines. [`bench`]
//! runs the recovery and classification experiments and writes CSV.

pub mod bench;
pub mod data;
pub mod error;
pub mod hash;
pub mod lbfgs;
pub mod loss;
pub mod optim;
pub mod sketch;
pub mod svec;
pub mod topk;

pub use error::{BenchError, DataError, SketchError, TrainError, VecError};
pub use lbfgs::{direction, CurvatureHistory, CurvaturePair};
pub use loss::{Example, Minibatch};
pub use optim::{Algo, StepReport, StepSchedule, TrainerConfig, TrainerState};
pub use sketch::CountSketch;
pub use svec::{FeatureId, FeatureSet, SparseVec};
pub use topk::TopKHeap;
