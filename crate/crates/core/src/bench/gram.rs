//! Spectrum of `S^T S` for the explicit `p x m` sketch matrix.
//!
//! Row `i` of `S` holds `s_j(i) / sqrt(d)` at column `j * w + h_j(i)` for each
//! of the `d` hash rows, so every row has unit norm and `E[S^T S] = (p/m) I`.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::Serialize;

use super::run_jobs;
use crate::hash::combine;
use crate::sketch::CountSketch;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GramTrial {
    pub trial: usize,
    pub seed: u64,
    /// Mean of all `m` eigenvalues.
    pub mean_eig: f64,
    pub min_nonzero_eig: f64,
    pub max_eig: f64,
    pub nonzero: usize,
    /// Largest relative deviation of a nonzero eigenvalue from `p/m`.
    pub eps: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GramReport {
    pub p: usize,
    pub m: usize,
    pub d: usize,
    pub trials: Vec<GramTrial>,
}

impl GramReport {
    pub fn expected(&self) -> f64 {
        self.p as f64 / self.m as f64
    }

    /// Mean over trials of the average eigenvalue.
    pub fn mean_eig(&self) -> f64 {
        self.trials.iter().map(|t| t.mean_eig).sum::<f64>() / self.trials.len() as f64
    }

    /// Mean over trials of the per-trial extremal deviation.
    pub fn eps_mean(&self) -> f64 {
        self.trials.iter().map(|t| t.eps).sum::<f64>() / self.trials.len() as f64
    }

    pub fn eps_max(&self) -> f64 {
        self.trials.iter().map(|t| t.eps).fold(0.0, f64::max)
    }
}

/// The explicit sketch matrix for features `0..p` under `sketch`'s hashes.
pub fn sketch_matrix(sketch: &CountSketch, p: usize) -> DMatrix<f64> {
    let (d, w) = (sketch.rows(), sketch.width());
    let scale = 1.0 / (d as f64).sqrt();
    let mut s = DMatrix::zeros(p, d * w);
    for i in 0..p {
        for j in 0..d {
            let col = j * w + sketch.hash_index(j, i as u64);
            s[(i, col)] += sketch.hash_sign(j, i as u64) * scale;
        }
    }
    s
}

pub fn gram_trial(p: usize, m: usize, d: usize, trial: usize, seed: u64) -> GramTrial {
    let sketch = CountSketch::new(d, m / d, seed).expect("validated shape");
    let s = sketch_matrix(&sketch, p);
    let gram = s.transpose() * &s;
    let eig = SymmetricEigen::new(gram).eigenvalues;
    let expected = p as f64 / m as f64;
    let floor = 1e-9 * expected;
    let nonzero: Vec<f64> = eig.iter().copied().filter(|&l| l > floor).collect();
    let min = nonzero.iter().copied().fold(f64::INFINITY, f64::min);
    let max = nonzero.iter().copied().fold(0.0, f64::max);
    GramTrial {
        trial,
        seed,
        mean_eig: eig.iter().sum::<f64>() / m as f64,
        min_nonzero_eig: min,
        max_eig: max,
        nonzero: nonzero.len(),
        eps: ((max / expected) - 1.0).abs().max((1.0 - min / expected).abs()),
    }
}

pub fn run_gram_check(p: usize, m: usize, d: usize, trials: usize, seed: u64) -> GramReport {
    let jobs: Vec<usize> = (0..trials).collect();
    let trials = run_jobs(&jobs, |&t| gram_trial(p, m, d, t, combine(seed, t as u64)));
    GramReport { p, m, d, trials }
}
