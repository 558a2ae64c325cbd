//! Feature hashing baseline: features are mapped by one signed hash into `m`
//! buckets before training, and a dense model is trained on the buckets.
//! Nothing maps buckets back to features, so it predicts but cannot select.

use super::{Algo, Prediction, TrainerConfig, TrainerState};
use crate::error::TrainError;
use crate::hash::{derive_seed, hash_feature, sign_of, Purpose};
use crate::loss::{Example, Minibatch};
use crate::svec::SparseVec;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FeatureHasher {
    buckets: usize,
    index_seed: u32,
    sign_seed: u32,
}

impl FeatureHasher {
    pub fn new(buckets: usize, seed: u64) -> Self {
        Self {
            buckets,
            index_seed: derive_seed(seed, 0, Purpose::Remap),
            sign_seed: derive_seed(seed, 1, Purpose::Remap),
        }
    }

    pub fn buckets(&self) -> usize {
        self.buckets
    }

    pub fn bucket(&self, feature: u64) -> u64 {
        (hash_feature(feature, self.index_seed) % self.buckets as u32) as u64
    }

    pub fn sign(&self, feature: u64) -> f64 {
        sign_of(hash_feature(feature, self.sign_seed))
    }

    /// Colliding features add into one shared bucket.
    pub fn remap(&self, x: &SparseVec) -> SparseVec {
        let mut v = SparseVec::from_pairs(x.iter().map(|(i, val)| (self.bucket(i), self.sign(i) * val)))
            .expect("finite input stays finite");
        v.canonicalize();
        v
    }

    pub fn remap_batch(&self, batch: &Minibatch) -> Minibatch {
        Minibatch::new(
            batch
                .examples()
                .iter()
                .map(|e| Example::new(self.remap(&e.x), e.y))
                .collect(),
        )
    }
}

/// A trained feature-hashing model.
#[derive(Clone, Debug)]
pub struct FhModel {
    state: TrainerState,
}

impl FhModel {
    pub fn state(&self) -> &TrainerState {
        &self.state
    }

    /// Learned weights of class `class`, one per bucket.
    pub fn weights(&self, class: usize) -> &[f64] {
        self.state.dense_weights(class).expect("fh state is dense")
    }
}

/// Trains a feature-hashing model with SGD over `batches`. The embedding has
/// `rows * width` buckets per class, the same budget as a sketch of that shape.
pub fn fh_train<I>(config: &TrainerConfig, batches: I) -> Result<FhModel, TrainError>
where
    I: IntoIterator<Item = Minibatch>,
{
    let mut state = TrainerState::new(TrainerConfig {
        algo: Algo::Fh,
        ..config.clone()
    })?;
    for batch in batches {
        state.step(&batch)?;
    }
    Ok(FhModel { state })
}

pub fn fh_predict(model: &FhModel, x: &SparseVec) -> Prediction {
    model.state.predict(x)
}
