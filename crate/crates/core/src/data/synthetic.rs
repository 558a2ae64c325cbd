//! Noiseless sparse linear regression: Gaussian design, `k`-sparse truth
//! with weights in `[0.8, 1.2]`, `y = x . beta*`.
//!
//! Row `i` is a pure function of `(seed, i)`, so rows can be regenerated on
//! demand or materialized once with [`SyntheticData::materialize`].

use rand::distributions::{Distribution, Uniform};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;
use rand_xoshiro::Xoshiro256PlusPlus;

use crate::error::DataError;
use crate::hash::combine;
use crate::loss::{Example, LinearScore, Minibatch};
use crate::svec::{sub, SparseVec};

pub const WEIGHT_RANGE: (f64, f64) = (0.8, 1.2);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SyntheticSpec {
    pub p: usize,
    pub n: usize,
    pub k: usize,
    pub seed: u64,
}

#[derive(Clone, Debug)]
pub struct SyntheticData {
    spec: SyntheticSpec,
    beta_star: SparseVec,
}

/// Features are numbered `1..=p`.
pub fn gen_synthetic(spec: SyntheticSpec) -> Result<SyntheticData, DataError> {
    if spec.k > spec.p {
        return Err(DataError::Invalid(format!("k = {} exceeds p = {}", spec.k, spec.p)));
    }
    if spec.n == 0 || spec.p == 0 {
        return Err(DataError::Invalid("synthetic task needs n >= 1 and p >= 1".into()));
    }
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(combine(spec.seed, 0));
    let weights = Uniform::new_inclusive(WEIGHT_RANGE.0, WEIGHT_RANGE.1);
    let support = sample(&mut rng, spec.p, spec.k);
    let beta_star = SparseVec::from_pairs(
        support
            .into_iter()
            .map(|i| (i as u64 + 1, weights.sample(&mut rng)))
            .collect::<Vec<_>>(),
    )
    .expect("distinct finite entries");
    Ok(SyntheticData { spec, beta_star })
}

impl SyntheticData {
    pub fn spec(&self) -> &SyntheticSpec {
        &self.spec
    }

    pub fn beta_star(&self) -> &SparseVec {
        &self.beta_star
    }

    /// Row `i` of the design with its label.
    pub fn row(&self, i: usize) -> Example {
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(combine(self.spec.seed, i as u64 + 1));
        let mut x = SparseVec::with_capacity(self.spec.p);
        for j in 1..=self.spec.p {
            let v: f64 = StandardNormal.sample(&mut rng);
            x.push_unchecked(j as u64, v);
        }
        let y = self.beta_star.score(&x);
        Example::new(x, y)
    }

    pub fn rows(&self) -> impl Iterator<Item = Example> + '_ {
        (0..self.spec.n).map(|i| self.row(i))
    }

    /// All `n` rows, in order.
    pub fn materialize(&self) -> Vec<Example> {
        self.rows().collect()
    }

    /// `b` rows drawn uniformly with replacement.
    pub fn sample_batch<R: Rng>(&self, rng: &mut R, b: usize) -> Minibatch {
        Minibatch::new((0..b).map(|_| self.row(rng.gen_range(0..self.spec.n))).collect())
    }

    /// Full-data MSE `(1/2n) sum_i (x_i.beta - y_i)^2`, which is also the
    /// excess loss since the optimum is zero.
    pub fn loss(&self, beta: &SparseVec) -> f64 {
        let diff = sub(beta, &self.beta_star);
        let sum: f64 = self.rows().map(|e| diff.score(&e.x).powi(2)).sum();
        0.5 * sum / self.spec.n as f64
    }
}
