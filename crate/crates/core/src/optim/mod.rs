//! Trainers.
//!
//! A [`TrainerState`] owns everything one optimizer mutates: per-class Count
//! Sketches, top-k heaps and curvature histories for the sketched algorithms,
//! or dense weight arrays for the baselines. Five algorithms share it:
//!
//! * `bear`: sketched online L-BFGS. The sketch accumulates `-eta * H g`
//!   restricted to the active set, and curvature pairs are measured on the
//!   same minibatch before and after the update.
//! * `mission`: sketched SGD, accumulating `-eta * g`.
//! * `sgd`, `olbfgs`: the same updates on a dense weight array.
//! * `fh`: dense SGD on features remapped into `m` signed hash buckets.

mod checkpoint;
mod fh;
mod sketched;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::Task;
use crate::error::TrainError;
use crate::lbfgs::{direction, CurvatureHistory};
use crate::loss::{
    grad_logistic, grad_mse, grad_softmax_all, logistic_loss, mse_loss, sigmoid, softmax,
    softmax_loss, LinearScore, Minibatch,
};
use crate::sketch::CountSketch;
use crate::svec::{sub, FeatureId, FeatureSet, SparseVec};
use crate::topk::TopKHeap;

pub use fh::{fh_predict, fh_train, FeatureHasher, FhModel};
pub use sketched::query_restricted;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algo {
    Bear,
    Mission,
    Sgd,
    Olbfgs,
    Fh,
}

impl Algo {
    pub const ALL: [Algo; 5] = [Algo::Bear, Algo::Mission, Algo::Sgd, Algo::Olbfgs, Algo::Fh];

    pub fn name(&self) -> &'static str {
        match self {
            Algo::Bear => "bear",
            Algo::Mission => "mission",
            Algo::Sgd => "sgd",
            Algo::Olbfgs => "olbfgs",
            Algo::Fh => "fh",
        }
    }

    pub fn is_sketched(&self) -> bool {
        matches!(self, Algo::Bear | Algo::Mission)
    }

    pub fn can_select_features(&self) -> bool {
        !matches!(self, Algo::Fh)
    }
}

impl fmt::Display for Algo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algo {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Algo::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| format!("unknown algorithm '{s}'"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScheduleKind {
    Constant,
    InverseTime,
}

/// `eta0` (constant) or `eta0 / (t + t0)` (inverse-time).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepSchedule {
    pub kind: ScheduleKind,
    pub eta0: f64,
    pub t0: f64,
}

impl StepSchedule {
    pub fn constant(eta0: f64) -> Self {
        Self {
            kind: ScheduleKind::Constant,
            eta0,
            t0: 1.0,
        }
    }

    pub fn inverse_time(eta0: f64, t0: f64) -> Self {
        Self {
            kind: ScheduleKind::InverseTime,
            eta0,
            t0,
        }
    }

    pub fn eta(&self, t: u64) -> f64 {
        match self.kind {
            ScheduleKind::Constant => self.eta0,
            ScheduleKind::InverseTime => self.eta0 / (t as f64 + self.t0),
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.eta0 > 0.0 && self.eta0.is_finite()) {
            return Err(format!("eta0 must be positive, got {}", self.eta0));
        }
        if self.kind == ScheduleKind::InverseTime && !(self.t0 > 0.0 && self.t0.is_finite()) {
            return Err(format!("t0 must be positive, got {}", self.t0));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainerConfig {
    pub algo: Algo,
    pub task: Task,
    /// Sketch rows `d`.
    pub rows: usize,
    /// Sketch columns `c`, per class. For `fh` the per-class embedding size is
    /// `rows * width` so that both models get the same memory.
    pub width: usize,
    /// Heap capacity `k`.
    pub top_k: usize,
    /// Curvature pairs kept, `tau`.
    pub tau: usize,
    pub schedule: StepSchedule,
    /// Hash seed.
    pub seed: u64,
    /// Dense weight array length for `sgd` and `olbfgs`.
    pub dim: usize,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        Self {
            algo: Algo::Bear,
            task: Task::Binary,
            rows: 5,
            width: 1024,
            top_k: 16,
            tau: 5,
            schedule: StepSchedule::constant(0.1),
            seed: 0,
            dim: 0,
        }
    }
}

impl TrainerConfig {
    /// Total sketch cells across classes.
    pub fn sketch_cells(&self) -> usize {
        self.rows * self.width * self.task.num_models()
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        self.schedule.validate().map_err(TrainError::Config)?;
        match self.algo {
            Algo::Bear | Algo::Mission | Algo::Fh if self.rows == 0 || self.width == 0 => Err(
                TrainError::Config(format!("sketch shape {}x{} is empty", self.rows, self.width)),
            ),
            Algo::Sgd | Algo::Olbfgs if self.dim == 0 => {
                Err(TrainError::Config("dense trainers need dim > 0".into()))
            }
            _ => Ok(()),
        }
    }

    /// Hash seed for the sketch of class `class`.
    pub(crate) fn class_seed(&self, class: usize) -> u64 {
        if self.task.num_models() == 1 {
            self.seed
        } else {
            crate::hash::combine(self.seed, class as u64)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepReport {
    /// Norm of the gradient at the pre-step iterate, over all classes.
    pub grad_norm: f64,
    pub eta: f64,
    /// Whether any class stored a new curvature pair.
    pub accepted_pair: bool,
}

#[derive(Clone, Debug)]
pub(crate) struct SketchedClass {
    pub sketch: CountSketch,
    pub heap: TopKHeap,
    pub history: CurvatureHistory,
}

#[derive(Clone, Debug, PartialEq)]
pub(crate) struct DenseClass {
    pub weights: Vec<f64>,
    pub history: CurvatureHistory,
}

#[derive(Clone, Debug)]
pub(crate) enum Model {
    Sketched(Vec<SketchedClass>),
    Dense(Vec<DenseClass>),
    Hashed {
        hasher: FeatureHasher,
        classes: Vec<DenseClass>,
    },
}

/// Counts of live accumulators and vector entries, in `f64`-sized units.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct MemoryMeter {
    pub peak: usize,
    pub last: usize,
}

impl MemoryMeter {
    fn record(&mut self, units: usize) {
        self.last = units;
        self.peak = self.peak.max(units);
    }
}

#[derive(Clone, Debug)]
pub struct TrainerState {
    config: TrainerConfig,
    t: u64,
    model: Model,
    meter: MemoryMeter,
}

/// Scores of one example, one per weight vector.
#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub scores: Vec<f64>,
}

impl Prediction {
    /// Regression value, binary `{0, 1}` label, or arg-max class.
    pub fn label(&self, task: Task) -> f64 {
        match task {
            Task::Regression => self.scores[0],
            Task::Binary => {
                if self.scores[0] > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Task::Multiclass(_) => {
                let mut best = 0;
                for (c, s) in self.scores.iter().enumerate() {
                    if *s > self.scores[best] {
                        best = c;
                    }
                }
                best as f64
            }
        }
    }

    /// Class probabilities: `[P(y = 1)]` for binary, softmax for multi-class.
    pub fn probabilities(&self, task: Task) -> Vec<f64> {
        match task {
            Task::Multiclass(_) => softmax(&self.scores),
            _ => vec![sigmoid(self.scores[0])],
        }
    }
}

pub(crate) fn gradients<B: LinearScore + ?Sized>(task: Task, betas: &[&B], batch: &Minibatch) -> Vec<SparseVec> {
    match task {
        Task::Regression => vec![grad_mse(betas[0], batch)],
        Task::Binary => vec![grad_logistic(betas[0], batch)],
        Task::Multiclass(_) => grad_softmax_all(betas, batch),
    }
}

pub fn task_loss<B: LinearScore + ?Sized>(task: Task, betas: &[&B], batch: &Minibatch) -> f64 {
    match task {
        Task::Regression => mse_loss(betas[0], batch),
        Task::Binary => logistic_loss(betas[0], batch),
        Task::Multiclass(_) => softmax_loss(betas, batch),
    }
}

fn combined_norm(gs: &[SparseVec]) -> f64 {
    gs.iter().map(|g| g.norm_sq()).sum::<f64>().sqrt()
}

fn all_finite(gs: &[SparseVec]) -> bool {
    gs.iter().all(|g| g.is_finite())
}

impl TrainerState {
    pub fn new(config: TrainerConfig) -> Result<Self, TrainError> {
        config.validate()?;
        let classes = config.task.num_models();
        let model = match config.algo {
            Algo::Bear | Algo::Mission => Model::Sketched(
                (0..classes)
                    .map(|c| {
                        Ok(SketchedClass {
                            sketch: CountSketch::new(config.rows, config.width, config.class_seed(c))?,
                            heap: TopKHeap::new(config.top_k),
                            history: CurvatureHistory::new(if config.algo == Algo::Bear {
                                config.tau
                            } else {
                                0
                            }),
                        })
                    })
                    .collect::<Result<_, TrainError>>()?,
            ),
            Algo::Sgd | Algo::Olbfgs => Model::Dense(
                (0..classes)
                    .map(|_| DenseClass {
                        weights: vec![0.0; config.dim],
                        history: CurvatureHistory::new(if config.algo == Algo::Olbfgs {
                            config.tau
                        } else {
                            0
                        }),
                    })
                    .collect(),
            ),
            Algo::Fh => {
                let buckets = config.rows * config.width;
                Model::Hashed {
                    hasher: FeatureHasher::new(buckets, config.seed),
                    classes: (0..classes)
                        .map(|_| DenseClass {
                            weights: vec![0.0; buckets],
                            history: CurvatureHistory::new(0),
                        })
                        .collect(),
                }
            }
        };
        Ok(Self {
            config,
            t: 0,
            model,
            meter: MemoryMeter::default(),
        })
    }

    pub fn config(&self) -> &TrainerConfig {
        &self.config
    }

    pub fn algo(&self) -> Algo {
        self.config.algo
    }

    pub fn task(&self) -> Task {
        self.config.task
    }

    /// Steps taken so far.
    pub fn t(&self) -> u64 {
        self.t
    }

    pub fn memory(&self) -> MemoryMeter {
        self.meter
    }

    pub fn num_classes(&self) -> usize {
        self.config.task.num_models()
    }

    /// Sketch of class `class`, for sketched trainers.
    pub fn sketch(&self, class: usize) -> Option<&CountSketch> {
        match &self.model {
            Model::Sketched(cs) => cs.get(class).map(|c| &c.sketch),
            _ => None,
        }
    }

    pub fn heap(&self, class: usize) -> Option<&TopKHeap> {
        match &self.model {
            Model::Sketched(cs) => cs.get(class).map(|c| &c.heap),
            _ => None,
        }
    }

    pub fn history(&self, class: usize) -> Option<&CurvatureHistory> {
        match &self.model {
            Model::Sketched(cs) => cs.get(class).map(|c| &c.history),
            Model::Dense(cs) => cs.get(class).map(|c| &c.history),
            Model::Hashed { .. } => None,
        }
    }

    /// Dense weights of class `class`, for `sgd`, `olbfgs` and `fh`.
    pub fn dense_weights(&self, class: usize) -> Option<&[f64]> {
        match &self.model {
            Model::Dense(cs) | Model::Hashed { classes: cs, .. } => {
                cs.get(class).map(|c| c.weights.as_slice())
            }
            Model::Sketched(_) => None,
        }
    }

    /// Runs one step of whichever algorithm this state was built for.
    pub fn step(&mut self, batch: &Minibatch) -> Result<StepReport, TrainError> {
        match self.config.algo {
            Algo::Bear => self.bear_step(batch),
            Algo::Mission => self.mission_step(batch),
            Algo::Sgd => self.sgd_step(batch),
            Algo::Olbfgs => self.olbfgs_step(batch),
            Algo::Fh => self.fh_step(batch),
        }
    }

    fn expect_algo(&self, algo: Algo, op: &'static str) -> Result<(), TrainError> {
        if self.config.algo == algo {
            Ok(())
        } else {
            Err(TrainError::WrongAlgo {
                op,
                algo: self.config.algo.name(),
            })
        }
    }

    /// Dense SGD: `w <- w - eta * g`.
    pub fn sgd_step(&mut self, batch: &Minibatch) -> Result<StepReport, TrainError> {
        self.expect_algo(Algo::Sgd, "sgd_step")?;
        self.dense_step(batch)
    }

    /// Dense online L-BFGS: `w <- w - eta * H g`, with the curvature pair
    /// measured on the same minibatch.
    pub fn olbfgs_step(&mut self, batch: &Minibatch) -> Result<StepReport, TrainError> {
        self.expect_algo(Algo::Olbfgs, "olbfgs_step")?;
        self.dense_step(batch)
    }

    fn fh_step(&mut self, batch: &Minibatch) -> Result<StepReport, TrainError> {
        let Model::Hashed { hasher, .. } = &self.model else {
            unreachable!("fh state without hashed model");
        };
        let remapped = hasher.remap_batch(batch);
        self.dense_step(&remapped)
    }

    fn dense_step(&mut self, batch: &Minibatch) -> Result<StepReport, TrainError> {
        let task = self.config.task;
        let eta = self.config.schedule.eta(self.t);
        let step = self.t;
        let dim_check = self.config.algo != Algo::Fh;
        let classes = match &mut self.model {
            Model::Dense(cs) | Model::Hashed { classes: cs, .. } => cs,
            Model::Sketched(_) => unreachable!("dense step on sketched model"),
        };
        if dim_check {
            let dim = classes[0].weights.len();
            if let Some(id) = batch
                .examples()
                .iter()
                .flat_map(|e| e.x.ids())
                .find(|&id| id as usize >= dim)
            {
                return Err(TrainError::Dimension { id, dim });
            }
        }
        let g_t = {
            let refs: Vec<&[f64]> = classes.iter().map(|c| c.weights.as_slice()).collect();
            gradients(task, &refs, batch)
        };
        if !all_finite(&g_t) {
            return Err(TrainError::NonFiniteGradient { step });
        }
        let updates: Vec<SparseVec> = classes
            .iter()
            .zip(&g_t)
            .map(|(c, g)| direction(g, &c.history).scale(-eta))
            .collect();
        if !all_finite(&updates) {
            return Err(TrainError::NonFiniteGradient { step });
        }
        let mut transient = g_t.iter().chain(&updates).map(|v| v.nnz()).sum::<usize>();
        let second_order = classes.iter().any(|c| c.history.capacity() > 0);
        let mut olds: Vec<SparseVec> = Vec::with_capacity(classes.len());
        for (c, u) in classes.iter_mut().zip(&updates) {
            let mut old = SparseVec::with_capacity(u.nnz());
            for (i, d) in u.iter() {
                let w = &mut c.weights[i as usize];
                old.push_unchecked(i, *w);
                *w += d;
            }
            olds.push(old);
        }
        let mut accepted = false;
        if second_order {
            let g_next = {
                let refs: Vec<&[f64]> = classes.iter().map(|c| c.weights.as_slice()).collect();
                gradients(task, &refs, batch)
            };
            if !all_finite(&g_next) {
                for (c, old) in classes.iter_mut().zip(&olds) {
                    for (i, w) in old.iter() {
                        c.weights[i as usize] = w;
                    }
                }
                return Err(TrainError::NonFiniteGradient { step });
            }
            for ((c, old), (gn, g)) in classes.iter_mut().zip(&olds).zip(g_next.iter().zip(&g_t)) {
                let new = SparseVec::from_sorted(
                    old.ids().map(|i| (i, c.weights[i as usize])).collect(),
                )
                .expect("sorted finite");
                let s = sub(&new, old);
                let r = sub(gn, g);
                transient += s.nnz() + r.nnz() + gn.nnz();
                accepted |= c.history.push_pair(s, r);
            }
        }
        let resident: usize = classes
            .iter()
            .map(|c| c.weights.len() + c.history.stored_entries())
            .sum();
        self.meter.record(resident + transient);
        self.t += 1;
        Ok(StepReport {
            grad_norm: combined_norm(&g_t),
            eta,
            accepted_pair: accepted,
        })
    }

    /// Scores `x` with every active feature's weight.
    pub fn predict(&self, x: &SparseVec) -> Prediction {
        let scores = match &self.model {
            Model::Sketched(cs) => cs
                .iter()
                .map(|c| x.iter().map(|(i, v)| v * c.sketch.query(i)).sum())
                .collect(),
            Model::Dense(cs) => cs.iter().map(|c| c.weights.score(x)).collect(),
            Model::Hashed { hasher, classes } => {
                let hx = hasher.remap(x);
                classes.iter().map(|c| c.weights.score(&hx)).collect()
            }
        };
        Prediction { scores }
    }

    /// Scores `x` using only the selected top-`k` features of each class.
    pub fn predict_selected(&self, x: &SparseVec, k: usize) -> Result<Prediction, TrainError> {
        let est = self.selected_estimate(k)?;
        Ok(Prediction {
            scores: est.iter().map(|b| b.score(x)).collect(),
        })
    }

    /// Per-class top-`k` features by descending `|weight|`. Sketched trainers
    /// return their heap contents; dense trainers sort their weights.
    pub fn select_features(&self, k: usize) -> Result<Vec<Vec<(FeatureId, f64)>>, TrainError> {
        match &self.model {
            Model::Sketched(cs) => Ok(cs
                .iter()
                .map(|c| c.heap.snapshot().into_iter().take(k).collect())
                .collect()),
            Model::Dense(cs) => Ok(cs
                .iter()
                .map(|c| {
                    let mut heap = TopKHeap::new(k);
                    for (i, &w) in c.weights.iter().enumerate() {
                        if w != 0.0 {
                            heap.offer(i as FeatureId, w);
                        }
                    }
                    heap.snapshot()
                })
                .collect()),
            Model::Hashed { .. } => Err(TrainError::WrongAlgo {
                op: "select_features",
                algo: "fh",
            }),
        }
    }

    /// Per-class weight estimate over the selected features, zeros elsewhere.
    /// Sketched weights are re-queried.
    pub fn selected_estimate(&self, k: usize) -> Result<Vec<SparseVec>, TrainError> {
        let selected = self.select_features(k)?;
        Ok(selected
            .into_iter()
            .enumerate()
            .map(|(c, feats)| {
                let pairs = feats.into_iter().map(|(i, w)| match &self.model {
                    Model::Sketched(cs) => (i, cs[c].sketch.query(i)),
                    _ => (i, w),
                });
                let mut v = SparseVec::from_pairs(pairs).expect("finite weights");
                v.canonicalize();
                v
            })
            .collect())
    }

    /// Mean task loss of the current model on `batch`, using the restricted
    /// weights the optimizer itself sees (heap members for sketched trainers).
    pub fn loss_on(&self, batch: &Minibatch) -> f64 {
        match &self.model {
            Model::Sketched(cs) => {
                let active = batch.active_set();
                let betas: Vec<SparseVec> = cs.iter().map(|c| sketched::restricted(c, active)).collect();
                let refs: Vec<&SparseVec> = betas.iter().collect();
                task_loss(self.config.task, &refs, batch)
            }
            Model::Dense(cs) => {
                let refs: Vec<&[f64]> = cs.iter().map(|c| c.weights.as_slice()).collect();
                task_loss(self.config.task, &refs, batch)
            }
            Model::Hashed { hasher, classes } => {
                let hb = hasher.remap_batch(batch);
                let refs: Vec<&[f64]> = classes.iter().map(|c| c.weights.as_slice()).collect();
                task_loss(self.config.task, &refs, &hb)
            }
        }
    }

    /// Features of `active` currently retained by class `class`'s heap.
    pub fn active_members(&self, active: &FeatureSet, class: usize) -> FeatureSet {
        match &self.model {
            Model::Sketched(cs) => cs[class].heap.members().intersect(active),
            _ => FeatureSet::new(),
        }
    }
}

/// Union of the batch's example supports.
pub fn active_set(batch: &Minibatch) -> FeatureSet {
    batch.active_set().clone()
}

#[cfg(test)]
mod tests;
