//! Support recovery on the synthetic regression task.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

use super::{metrics, run_jobs, sort_results, DataSource, ExperimentConfig, TrialResult};
use crate::data::{gen_synthetic, SyntheticSpec, Task};
use crate::error::{BenchError, TrainError};
use crate::hash::combine;
use crate::loss::Minibatch;
use crate::optim::{Algo, TrainerConfig, TrainerState};
use crate::svec::FeatureSet;

/// One trial at one grid point.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticJob {
    pub algo: Algo,
    pub point: usize,
    pub cf: f64,
    pub eta: f64,
    /// Sketch width; unused by dense algorithms.
    pub width: usize,
    pub trial: usize,
}

/// Seeds shared by every algorithm and grid point of one trial, so that all
/// of them see the same data, hash functions and minibatch sequence.
fn trial_seed(config: &ExperimentConfig, trial: usize) -> u64 {
    combine(config.seed, trial as u64)
}

fn jobs(config: &ExperimentConfig, p: usize) -> Vec<SyntheticJob> {
    let d = config.rows;
    let shapes: Vec<(f64, usize)> = match config.width {
        Some(w) => vec![(p as f64 / (d * w) as f64, w)],
        None => config
            .cf_grid
            .iter()
            .map(|&cf| (cf, ((p as f64 / cf) / d as f64).round().max(1.0) as usize))
            .collect(),
    };
    let mut out = Vec::new();
    for &algo in &config.algos {
        let shapes = if algo.is_sketched() {
            shapes.clone()
        } else {
            vec![(1.0, 0)]
        };
        let points = shapes
            .iter()
            .flat_map(|&s| config.eta_grid.iter().map(move |&eta| (s, eta)));
        for (point, ((cf, width), eta)) in points.enumerate() {
            for trial in 0..config.trials {
                out.push(SyntheticJob {
                    algo,
                    point,
                    cf,
                    eta,
                    width,
                    trial,
                });
            }
        }
    }
    out
}

/// Trains one model to convergence or the step budget, then scores the
/// selected top-`k` features against the truth.
pub fn run_synthetic_trial(config: &ExperimentConfig, job: &SyntheticJob) -> Result<TrialResult, BenchError> {
    let DataSource::Synthetic { p, n, k } = config.data else {
        return Err(BenchError::Config("synthetic trial without synthetic data".into()));
    };
    let start = Instant::now();
    let seed = trial_seed(config, job.trial);
    let data = gen_synthetic(SyntheticSpec {
        p,
        n,
        k,
        seed: combine(seed, 1),
    })?;
    let rows = data.materialize();
    let top_k = config.top_k.unwrap_or(k);
    let trainer = TrainerConfig {
        algo: job.algo,
        task: Task::Regression,
        rows: config.rows,
        width: job.width,
        top_k,
        tau: config.tau,
        schedule: config.schedule(job.eta),
        seed: combine(seed, 2),
        dim: p + 1,
    };
    let mut state = TrainerState::new(trainer)?;
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(combine(seed, 3));
    let cap = (config.epochs * n / config.batch).max(1) as u64;
    let mut below = 0;
    let mut converged = false;
    while state.t() < cap {
        let batch = Minibatch::new(
            (0..config.batch)
                .map(|_| rows[rng.gen_range(0..n)].clone())
                .collect(),
        );
        match state.step(&batch) {
            Ok(report) => {
                if report.grad_norm < config.grad_tol {
                    below += 1;
                    if below >= config.patience {
                        converged = true;
                        break;
                    }
                } else {
                    below = 0;
                }
            }
            // A diverged trial is a failed trial, not a failed experiment.
            Err(TrainError::NonFiniteGradient { .. }) => break,
            Err(e) => return Err(e.into()),
        }
    }
    let selected: FeatureSet = state.select_features(k)?[0].iter().map(|&(id, _)| id).collect();
    let estimate = state.selected_estimate(k)?.remove(0);
    let truth = data.beta_star().support();
    Ok(TrialResult {
        algo: job.algo,
        point: job.point,
        cf: job.cf,
        eta: job.eta,
        k: top_k,
        trial: job.trial,
        seed,
        success: metrics::success_metric(&selected, &truth),
        l2_error: metrics::l2_error(&estimate, data.beta_star()),
        accuracy: f64::NAN,
        auc: f64::NAN,
        steps: state.t(),
        converged,
        wall_ms: start.elapsed().as_millis() as u64,
    })
}

fn run_grid(config: &ExperimentConfig) -> Result<Vec<TrialResult>, BenchError> {
    let DataSource::Synthetic { p, .. } = config.data else {
        return Err(BenchError::Config("synthetic experiment without synthetic data".into()));
    };
    let jobs = jobs(config, p);
    let mut results = run_jobs(&jobs, |job| run_synthetic_trial(config, job))
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;
    sort_results(&mut results);
    Ok(results)
}

/// Success probability and `l2` error against the compression factor.
pub fn run_phase_transition(config: &ExperimentConfig) -> Result<Vec<TrialResult>, BenchError> {
    config.validate()?;
    run_grid(config)
}

/// Success probability against the step size, on a fixed sketch shape.
pub fn run_stepsize_sweep(config: &ExperimentConfig) -> Result<Vec<TrialResult>, BenchError> {
    config.validate()?;
    if config.width.is_none() && config.cf_grid.len() != 1 {
        return Err(BenchError::Config(
            "stepsize_sweep needs a fixed sketch: give --width or a single --cf".into(),
        ));
    }
    run_grid(config)
}
