//! Mean-over-batch losses and gradients for linear models.
//!
//! Gradients are accumulated only over the batch's active set, so their
//! support never leaves the union of example supports.

use std::sync::OnceLock;

use crate::svec::{FeatureSet, SparseVec};

/// One labeled example. Regression labels are real, binary labels are `0.0`
/// or `1.0`, multi-class labels are zero-based class indices stored as `f64`.
#[derive(Clone, Debug, PartialEq)]
pub struct Example {
    pub x: SparseVec,
    pub y: f64,
}

impl Example {
    pub fn new(x: SparseVec, y: f64) -> Self {
        Self { x, y }
    }

    pub fn class(&self) -> usize {
        self.y as usize
    }
}

#[derive(Clone, Debug, Default)]
pub struct Minibatch {
    examples: Vec<Example>,
    active: OnceLock<FeatureSet>,
}

impl Minibatch {
    pub fn new(examples: Vec<Example>) -> Self {
        Self {
            examples,
            active: OnceLock::new(),
        }
    }

    pub fn examples(&self) -> &[Example] {
        &self.examples
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    /// Union of the example supports, computed once.
    pub fn active_set(&self) -> &FeatureSet {
        self.active
            .get_or_init(|| FeatureSet::union_of(self.examples.iter().map(|e| &e.x)))
    }
}

/// A linear model that can score a sparse example.
pub trait LinearScore {
    fn score(&self, x: &SparseVec) -> f64;
}

impl LinearScore for SparseVec {
    fn score(&self, x: &SparseVec) -> f64 {
        crate::svec::dot(self, x)
    }
}

/// Dense weights indexed by feature id; ids past the end score zero.
impl LinearScore for [f64] {
    fn score(&self, x: &SparseVec) -> f64 {
        x.iter()
            .map(|(i, v)| self.get(i as usize).map_or(0.0, |w| w * v))
            .sum()
    }
}

impl LinearScore for Vec<f64> {
    fn score(&self, x: &SparseVec) -> f64 {
        self.as_slice().score(x)
    }
}

pub fn sigmoid(s: f64) -> f64 {
    if s >= 0.0 {
        1.0 / (1.0 + (-s).exp())
    } else {
        let e = s.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + exp(s))` without overflow.
fn softplus(s: f64) -> f64 {
    if s > 0.0 {
        s + (-s).exp().ln_1p()
    } else {
        s.exp().ln_1p()
    }
}

fn log_sum_exp(scores: &[f64]) -> f64 {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + scores.iter().map(|s| (s - max).exp()).sum::<f64>().ln()
}

pub fn softmax(scores: &[f64]) -> Vec<f64> {
    let lse = log_sum_exp(scores);
    scores.iter().map(|s| (s - lse).exp()).collect()
}

/// `(1/b) sum_i coef_i * x_i` over the active set, exact zeros dropped.
fn accumulate(batch: &Minibatch, active: &FeatureSet, coef: impl Fn(usize) -> f64) -> SparseVec {
    let mut buf = vec![0.0; active.len()];
    let ids = active.ids();
    for (n, ex) in batch.examples().iter().enumerate() {
        let c = coef(n);
        if c == 0.0 {
            continue;
        }
        if ex.x.nnz() == ids.len() {
            // Support equals the active set.
            for (slot, (_, v)) in buf.iter_mut().zip(ex.x.iter()) {
                *slot += c * v;
            }
            continue;
        }
        let mut pos = 0;
        let scan = ids.len() <= 8 * ex.x.nnz();
        for (id, v) in ex.x.iter() {
            if scan {
                while ids[pos] < id {
                    pos += 1;
                }
            } else {
                pos += ids[pos..].partition_point(|&k| k < id);
            }
            buf[pos] += c * v;
        }
    }
    let inv_b = 1.0 / batch.len().max(1) as f64;
    let mut out = SparseVec::with_capacity(active.len());
    for (&id, &g) in ids.iter().zip(&buf) {
        let g = g * inv_b;
        if g != 0.0 {
            out.push_unchecked(id, g);
        }
    }
    out
}

/// `(1/2b) sum_i (x_i.beta - y_i)^2`
pub fn mse_loss<B: LinearScore + ?Sized>(beta: &B, batch: &Minibatch) -> f64 {
    let sum: f64 = batch
        .examples()
        .iter()
        .map(|e| (beta.score(&e.x) - e.y).powi(2))
        .sum();
    0.5 * sum / batch.len().max(1) as f64
}

/// `(1/b) sum_i (x_i.beta - y_i) x_i`
pub fn grad_mse<B: LinearScore + ?Sized>(beta: &B, batch: &Minibatch) -> SparseVec {
    let residuals: Vec<f64> = batch
        .examples()
        .iter()
        .map(|e| beta.score(&e.x) - e.y)
        .collect();
    accumulate(batch, batch.active_set(), |n| residuals[n])
}

/// Mean binary cross-entropy with labels in `{0, 1}`.
pub fn logistic_loss<B: LinearScore + ?Sized>(beta: &B, batch: &Minibatch) -> f64 {
    let sum: f64 = batch
        .examples()
        .iter()
        .map(|e| {
            let s = beta.score(&e.x);
            softplus(s) - e.y * s
        })
        .sum();
    sum / batch.len().max(1) as f64
}

/// `(1/b) sum_i (sigmoid(x_i.beta) - y_i) x_i`
pub fn grad_logistic<B: LinearScore + ?Sized>(beta: &B, batch: &Minibatch) -> SparseVec {
    let residuals: Vec<f64> = batch
        .examples()
        .iter()
        .map(|e| sigmoid(beta.score(&e.x)) - e.y)
        .collect();
    accumulate(batch, batch.active_set(), |n| residuals[n])
}

fn class_scores<B: LinearScore + ?Sized>(betas: &[&B], x: &SparseVec) -> Vec<f64> {
    betas.iter().map(|b| b.score(x)).collect()
}

/// Mean multinomial cross-entropy with zero-based class labels.
pub fn softmax_loss<B: LinearScore + ?Sized>(betas: &[&B], batch: &Minibatch) -> f64 {
    let sum: f64 = batch
        .examples()
        .iter()
        .map(|e| {
            let scores = class_scores(betas, &e.x);
            log_sum_exp(&scores) - scores[e.class()]
        })
        .sum();
    sum / batch.len().max(1) as f64
}

/// Gradients of [`softmax_loss`] for every class, sharing one pass over the
/// batch: `(1/b) sum_i (softmax_c(scores_i) - [y_i = c]) x_i`.
pub fn grad_softmax_all<B: LinearScore + ?Sized>(betas: &[&B], batch: &Minibatch) -> Vec<SparseVec> {
    let probs: Vec<Vec<f64>> = batch
        .examples()
        .iter()
        .map(|e| softmax(&class_scores(betas, &e.x)))
        .collect();
    let active = batch.active_set();
    (0..betas.len())
        .map(|c| {
            accumulate(batch, active, |n| {
                let ex = &batch.examples()[n];
                probs[n][c] - if ex.class() == c { 1.0 } else { 0.0 }
            })
        })
        .collect()
}

/// Gradient of [`softmax_loss`] with respect to class `class`.
pub fn grad_softmax<B: LinearScore + ?Sized>(betas: &[&B], batch: &Minibatch, class: usize) -> SparseVec {
    let active = batch.active_set();
    let coefs: Vec<f64> = batch
        .examples()
        .iter()
        .map(|e| {
            let p = softmax(&class_scores(betas, &e.x));
            p[class] - if e.class() == class { 1.0 } else { 0.0 }
        })
        .collect();
    accumulate(batch, active, |n| coefs[n])
}
