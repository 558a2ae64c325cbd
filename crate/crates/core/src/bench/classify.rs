//! Single-epoch streaming classification on real data.

use std::collections::HashSet;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_xoshiro::Xoshiro256PlusPlus;

use super::{metrics, run_jobs, sort_results, DataSource, Experiment, ExperimentConfig, Metric, TrialResult};
use crate::data::{read_vw_file, Dataset, DEFAULT_INGEST_SEED};
use crate::error::{BenchError, DataError};
use crate::hash::combine;
use crate::loss::Minibatch;
use crate::optim::{Algo, TrainerConfig, TrainerState};
use crate::svec::SparseVec;

/// Largest dense weight array the dense baselines may allocate.
const MAX_DENSE_DIM: u64 = 1 << 27;

/// A train/test pair and its feature-space size.
#[derive(Clone, Debug)]
pub struct ClassifyData {
    pub train: Dataset,
    pub test: Dataset,
    /// Distinct feature ids over train and test; the `p` of the compression factor.
    pub p: usize,
    /// Largest feature id plus one, for dense baselines.
    pub dim: u64,
}

impl ClassifyData {
    pub fn new(train: Dataset, test: Dataset) -> Result<Self, DataError> {
        if train.is_empty() || test.is_empty() {
            return Err(DataError::Invalid("train and test sets must be non-empty".into()));
        }
        let mut seen = HashSet::new();
        let mut dim = 0;
        for e in train.examples.iter().chain(&test.examples) {
            for id in e.x.ids() {
                seen.insert(id);
                dim = dim.max(id + 1);
            }
        }
        Ok(Self {
            train,
            test,
            p: seen.len(),
            dim,
        })
    }

    pub fn load(config: &ExperimentConfig) -> Result<Self, BenchError> {
        let DataSource::Files { train, test } = &config.data else {
            return Err(BenchError::Config("classification needs data files".into()));
        };
        let train_set = read_vw_file(train, config.task, DEFAULT_INGEST_SEED)?;
        let (train_set, test_set) = match test {
            Some(path) => (train_set, read_vw_file(path, config.task, DEFAULT_INGEST_SEED)?),
            None => train_set.split_tail(0.2),
        };
        Ok(Self::new(train_set, test_set)?)
    }
}

#[derive(Clone, Debug)]
struct Job {
    algo: Algo,
    point: usize,
    cf: f64,
    eta: f64,
    /// Heap capacity for training.
    top_k: usize,
    /// Features used at prediction, `None` for all.
    select: Option<usize>,
    trial: usize,
}

fn width_for(config: &ExperimentConfig, p: usize, cf: f64) -> usize {
    let m = p as f64 / cf;
    (m / (config.rows * config.task.num_models()) as f64).round().max(1.0) as usize
}

fn train_and_score(config: &ExperimentConfig, data: &ClassifyData, job: &Job) -> Result<TrialResult, BenchError> {
    let start = Instant::now();
    let seed = combine(config.seed, job.trial as u64);
    if !job.algo.is_sketched() && job.algo != Algo::Fh && data.dim > MAX_DENSE_DIM {
        return Err(BenchError::Config(format!(
            "feature ids up to {} are too large for dense {}",
            data.dim, job.algo
        )));
    }
    let trainer = TrainerConfig {
        algo: job.algo,
        task: config.task,
        rows: config.rows,
        width: width_for(config, data.p, job.cf),
        top_k: job.top_k,
        tau: config.tau,
        schedule: config.schedule(job.eta),
        seed: combine(seed, 2),
        dim: data.dim as usize,
    };
    let mut state = TrainerState::new(trainer)?;
    let mut order: Vec<usize> = (0..data.train.len()).collect();
    order.shuffle(&mut Xoshiro256PlusPlus::seed_from_u64(combine(seed, 3)));
    let mut steps_ok = true;
    for chunk in order.chunks(config.batch) {
        let batch = Minibatch::new(chunk.iter().map(|&i| data.train.examples[i].clone()).collect());
        if state.step(&batch).is_err() {
            steps_ok = false;
            break;
        }
    }

    let selected: Option<Vec<SparseVec>> = match job.select {
        Some(k) => Some(state.selected_estimate(k)?),
        None => None,
    };
    let mut correct = 0usize;
    let mut scores = Vec::with_capacity(data.test.len());
    let mut labels = Vec::with_capacity(data.test.len());
    for e in &data.test.examples {
        let pred = match &selected {
            Some(betas) => crate::optim::Prediction {
                scores: betas.iter().map(|b| crate::svec::dot(b, &e.x)).collect(),
            },
            None => state.predict(&e.x),
        };
        if pred.label(config.task) == e.y {
            correct += 1;
        }
        scores.push(pred.scores[0]);
        labels.push(e.y == 1.0);
    }
    let auc = if config.metric == Metric::Auc {
        metrics::auc(&scores, &labels).map_err(|_| {
            BenchError::Data(DataError::Invalid("AUC needs both classes in the test set".into()))
        })?
    } else {
        f64::NAN
    };
    Ok(TrialResult {
        algo: job.algo,
        point: job.point,
        cf: job.cf,
        eta: job.eta,
        k: job.select.unwrap_or(job.top_k),
        trial: job.trial,
        seed,
        success: steps_ok,
        l2_error: f64::NAN,
        accuracy: correct as f64 / data.test.len() as f64,
        auc,
        steps: state.t(),
        converged: steps_ok,
        wall_ms: start.elapsed().as_millis() as u64,
    })
}

fn run(config: &ExperimentConfig, data: &ClassifyData, jobs: Vec<Job>) -> Result<Vec<TrialResult>, BenchError> {
    let mut results = run_jobs(&jobs, |job| train_and_score(config, data, job))
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;
    sort_results(&mut results);
    Ok(results)
}

fn default_top_k(config: &ExperimentConfig) -> usize {
    config.top_k.unwrap_or(1000)
}

/// Test accuracy (or AUC) against the compression factor, predicting with
/// every active feature. Dense baselines run once, at `cf = 1`.
pub fn run_classify_vs_cf(config: &ExperimentConfig, data: &ClassifyData) -> Result<Vec<TrialResult>, BenchError> {
    config.validate()?;
    let mut jobs = Vec::new();
    for &algo in &config.algos {
        let cfs: Vec<f64> = if algo.is_sketched() || algo == Algo::Fh {
            config.cf_grid.clone()
        } else {
            vec![1.0]
        };
        let points = cfs.iter().flat_map(|&cf| config.eta_grid.iter().map(move |&eta| (cf, eta)));
        for (point, (cf, eta)) in points.enumerate() {
            for trial in 0..config.trials {
                jobs.push(Job {
                    algo,
                    point,
                    cf,
                    eta,
                    top_k: default_top_k(config),
                    select: None,
                    trial,
                });
            }
        }
    }
    run(config, data, jobs)
}

/// Test accuracy (or AUC) predicting with only the top-`k` selected features,
/// at the first compression factor of the grid.
pub fn run_topk_sweep(config: &ExperimentConfig, data: &ClassifyData) -> Result<Vec<TrialResult>, BenchError> {
    config.validate()?;
    debug_assert_eq!(config.experiment, Experiment::TopkSweep);
    let cf = config.cf_grid[0];
    let mut jobs = Vec::new();
    for &algo in &config.algos {
        let cf = if algo.is_sketched() { cf } else { 1.0 };
        let points = config
            .k_grid
            .iter()
            .flat_map(|&k| config.eta_grid.iter().map(move |&eta| (k, eta)));
        for (point, (k, eta)) in points.enumerate() {
            for trial in 0..config.trials {
                jobs.push(Job {
                    algo,
                    point,
                    cf,
                    eta,
                    top_k: k,
                    select: Some(k),
                    trial,
                });
            }
        }
    }
    run(config, data, jobs)
}
