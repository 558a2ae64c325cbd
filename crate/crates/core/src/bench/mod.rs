//! Experiment harness: synthetic support recovery, step-size sensitivity,
//! classification against compression, top-k sweeps and the sketch Gram
//! check. Every experiment is a pure function of its [`ExperimentConfig`],
//! and results are written as CSV in a fixed order.

mod classify;
mod csv;
mod gram;
mod metrics;
mod runner;
mod synthetic;

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::Task;
use crate::error::BenchError;
use crate::optim::{Algo, ScheduleKind, StepSchedule};

pub use classify::{run_classify_vs_cf, run_topk_sweep, ClassifyData};
pub use csv::{write_gram_csv, write_results_csv, CSV_COLUMNS};
pub use gram::{gram_trial, run_gram_check, GramReport, GramTrial};
pub use metrics::{auc, l2_error, success_metric};
pub use runner::{run_jobs, run_jobs_sequential};
pub use synthetic::{run_phase_transition, run_stepsize_sweep, run_synthetic_trial, SyntheticJob};

/// Compression factors for sketches holding 10% to 60% of `p` cells.
pub const DEFAULT_CF_GRID: [f64; 6] = [10.0, 5.0, 10.0 / 3.0, 2.5, 2.0, 5.0 / 3.0];
/// `1e-7` through `1e-1`.
pub const DEFAULT_ETA_GRID: [f64; 7] = [1e-7, 1e-6, 1e-5, 1e-4, 1e-3, 1e-2, 1e-1];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    PhaseTransition,
    StepsizeSweep,
    ClassifyVsCf,
    TopkSweep,
    GramCheck,
}

impl Experiment {
    pub fn name(&self) -> &'static str {
        match self {
            Experiment::PhaseTransition => "phase_transition",
            Experiment::StepsizeSweep => "stepsize_sweep",
            Experiment::ClassifyVsCf => "classify_vs_cf",
            Experiment::TopkSweep => "topk_sweep",
            Experiment::GramCheck => "gram_check",
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        [
            Experiment::PhaseTransition,
            Experiment::StepsizeSweep,
            Experiment::ClassifyVsCf,
            Experiment::TopkSweep,
            Experiment::GramCheck,
        ]
        .into_iter()
        .find(|e| e.name() == s)
        .ok_or_else(|| format!("unknown experiment '{s}'"))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    /// The synthetic regression task with `p` features, `n` rows and a
    /// `k`-sparse truth.
    Synthetic { p: usize, n: usize, k: usize },
    /// VW-format files. Without a test file the last 20% of `train` is held out.
    Files { train: PathBuf, test: Option<PathBuf> },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Accuracy,
    Auc,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub algos: Vec<Algo>,
    pub trials: usize,
    pub cf_grid: Vec<f64>,
    /// Step sizes; `eta0` of the schedule at each grid point.
    pub eta_grid: Vec<f64>,
    pub k_grid: Vec<usize>,
    /// Sketch rows `d`.
    pub rows: usize,
    /// Fixed sketch width, overriding the CF grid (step-size sweep).
    pub width: Option<usize>,
    /// Heap capacity; for the synthetic task defaults to its sparsity.
    pub top_k: Option<usize>,
    pub tau: usize,
    pub batch: usize,
    pub schedule: ScheduleKind,
    pub t0: f64,
    pub seed: u64,
    pub data: DataSource,
    pub task: Task,
    pub metric: Metric,
    /// Synthetic step budget in epochs: at most `epochs * n / batch` steps.
    pub epochs: usize,
    /// Gradient-norm threshold for convergence.
    pub grad_tol: f64,
    /// Consecutive below-threshold steps that count as converged.
    pub patience: usize,
    /// Gram check: total columns `m` of the sketch matrix.
    pub gram_m: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            experiment: Experiment::PhaseTransition,
            algos: vec![Algo::Bear, Algo::Mission],
            trials: 200,
            cf_grid: DEFAULT_CF_GRID.to_vec(),
            eta_grid: vec![0.1],
            k_grid: vec![8],
            rows: 3,
            width: None,
            top_k: None,
            tau: 5,
            batch: 10,
            schedule: ScheduleKind::Constant,
            t0: 10.0,
            seed: 0,
            data: DataSource::Synthetic { p: 1000, n: 900, k: 8 },
            task: Task::Regression,
            metric: Metric::Accuracy,
            epochs: 50,
            grad_tol: 1e-7,
            patience: 5,
            gram_m: 400,
        }
    }
}

impl ExperimentConfig {
    /// Defaults for one experiment, before command-line overrides.
    pub fn preset(experiment: Experiment) -> Self {
        let base = Self {
            experiment,
            ..Self::default()
        };
        match experiment {
            Experiment::PhaseTransition => base,
            Experiment::StepsizeSweep => Self {
                trials: 100,
                width: Some(150),
                eta_grid: DEFAULT_ETA_GRID.to_vec(),
                ..base
            },
            Experiment::ClassifyVsCf | Experiment::TopkSweep => Self {
                algos: if experiment == Experiment::ClassifyVsCf {
                    vec![Algo::Bear, Algo::Mission, Algo::Fh]
                } else {
                    vec![Algo::Bear, Algo::Mission]
                },
                trials: 1,
                cf_grid: vec![10.0, 30.0, 95.0],
                k_grid: vec![10, 50, 100, 500],
                rows: 5,
                task: Task::Binary,
                data: DataSource::Files {
                    train: PathBuf::new(),
                    test: None,
                },
                ..base
            },
            Experiment::GramCheck => Self {
                algos: vec![],
                trials: 50,
                rows: 5,
                data: DataSource::Synthetic { p: 2000, n: 0, k: 0 },
                ..base
            },
        }
    }

    pub fn schedule(&self, eta: f64) -> StepSchedule {
        match self.schedule {
            ScheduleKind::Constant => StepSchedule::constant(eta),
            ScheduleKind::InverseTime => StepSchedule::inverse_time(eta, self.t0),
        }
    }

    /// One-line JSON rendering, written as the CSV header comment.
    pub fn fingerprint(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        let bad = |m: String| Err(BenchError::Config(m));
        if self.trials == 0 {
            return bad("trials must be positive".into());
        }
        if self.rows == 0 {
            return bad("sketch rows must be positive".into());
        }
        if self.batch == 0 {
            return bad("batch size must be positive".into());
        }
        if self.width == Some(0) {
            return bad("sketch width must be positive".into());
        }
        if let Some(c) = self.cf_grid.iter().find(|c| !(c.is_finite() && **c > 0.0)) {
            return bad(format!("compression factor {c} must be positive"));
        }
        if let Some(e) = self.eta_grid.iter().find(|e| !(e.is_finite() && **e > 0.0)) {
            return bad(format!("step size {e} must be positive"));
        }
        if self.schedule == ScheduleKind::InverseTime && !(self.t0 > 0.0) {
            return bad(format!("t0 must be positive, got {}", self.t0));
        }
        let needs_algos = self.experiment != Experiment::GramCheck;
        if needs_algos && self.algos.is_empty() {
            return bad("no algorithms selected".into());
        }
        match self.experiment {
            Experiment::PhaseTransition | Experiment::StepsizeSweep => {
                let DataSource::Synthetic { p, n, k } = self.data else {
                    return bad(format!("{} runs on the synthetic task only", self.experiment));
                };
                if k == 0 || k > p || n == 0 {
                    return bad(format!("synthetic task needs 0 < k <= p and n > 0 (p={p}, n={n}, k={k})"));
                }
                if self.task != Task::Regression {
                    return bad("the synthetic task is regression".into());
                }
                if let Some(a) = self.algos.iter().find(|a| !a.can_select_features()) {
                    return bad(format!("{a} cannot select features"));
                }
                if self.eta_grid.is_empty() || (self.width.is_none() && self.cf_grid.is_empty()) {
                    return bad("empty grid".into());
                }
            }
            Experiment::ClassifyVsCf | Experiment::TopkSweep => {
                if !matches!(self.data, DataSource::Files { .. }) {
                    return bad(format!("{} needs --data <path>", self.experiment));
                }
                if self.task == Task::Regression {
                    return bad("classification experiments need a binary or multiclass task".into());
                }
                if self.metric == Metric::Auc && self.task != Task::Binary {
                    return bad("AUC is defined for binary tasks only".into());
                }
                if self.cf_grid.is_empty() || self.eta_grid.is_empty() {
                    return bad("empty grid".into());
                }
                if self.experiment == Experiment::TopkSweep {
                    if self.k_grid.is_empty() || self.k_grid.contains(&0) {
                        return bad("k grid must be non-empty and positive".into());
                    }
                    if let Some(a) = self.algos.iter().find(|a| !a.can_select_features()) {
                        return bad(format!("{a} cannot select features"));
                    }
                }
            }
            Experiment::GramCheck => {
                let DataSource::Synthetic { p, .. } = self.data else {
                    return bad("gram_check builds its own sketch matrix; use --data synthetic".into());
                };
                if p == 0 || p > 5000 {
                    return bad(format!("gram_check needs 0 < p <= 5000, got {p}"));
                }
                if self.gram_m == 0 || !self.gram_m.is_multiple_of(self.rows) {
                    return bad(format!("m = {} must be a positive multiple of d = {}", self.gram_m, self.rows));
                }
            }
        }
        Ok(())
    }
}

/// Outcome of one trial at one grid point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub algo: Algo,
    /// Position of the grid point, for ordering.
    pub point: usize,
    pub cf: f64,
    pub eta: f64,
    pub k: usize,
    pub trial: usize,
    pub seed: u64,
    pub success: bool,
    pub l2_error: f64,
    pub accuracy: f64,
    pub auc: f64,
    pub steps: u64,
    pub converged: bool,
    pub wall_ms: u64,
}

/// Mean over the trials of one `(algo, point)` group.
#[derive(Clone, Debug, PartialEq)]
pub struct Aggregate {
    pub algo: Algo,
    pub point: usize,
    pub cf: f64,
    pub eta: f64,
    pub k: usize,
    pub trials: usize,
    pub success: f64,
    pub l2_error: f64,
    pub accuracy: f64,
    pub auc: f64,
    pub steps: f64,
    pub converged: f64,
    pub wall_ms: f64,
}

/// Sorts by `(algo, point, trial)`.
pub fn sort_results(results: &mut [TrialResult]) {
    results.sort_by_key(|a| (a.algo, a.point, a.trial));
}

/// Groups sorted results by `(algo, point)`.
pub fn aggregate(results: &[TrialResult]) -> Vec<Aggregate> {
    let mut out: Vec<Aggregate> = Vec::new();
    for group in results.chunk_by(|a, b| a.algo == b.algo && a.point == b.point) {
        let n = group.len() as f64;
        let mean = |f: &dyn Fn(&TrialResult) -> f64| group.iter().map(f).sum::<f64>() / n;
        let first = &group[0];
        out.push(Aggregate {
            algo: first.algo,
            point: first.point,
            cf: first.cf,
            eta: first.eta,
            k: first.k,
            trials: group.len(),
            success: mean(&|r| r.success as u8 as f64),
            l2_error: mean(&|r| r.l2_error),
            accuracy: mean(&|r| r.accuracy),
            auc: mean(&|r| r.auc),
            steps: mean(&|r| r.steps as f64),
            converged: mean(&|r| r.converged as u8 as f64),
            wall_ms: mean(&|r| r.wall_ms as f64),
        });
    }
    out
}

/// Output of one experiment.
#[derive(Clone, Debug)]
pub enum Report {
    Trials(Vec<TrialResult>),
    Gram(GramReport),
}

/// Runs the configured experiment.
pub fn run(config: &ExperimentConfig, classify_data: Option<&ClassifyData>) -> Result<Report, BenchError> {
    config.validate()?;
    match config.experiment {
        Experiment::PhaseTransition => Ok(Report::Trials(run_phase_transition(config)?)),
        Experiment::StepsizeSweep => Ok(Report::Trials(run_stepsize_sweep(config)?)),
        Experiment::ClassifyVsCf | Experiment::TopkSweep => {
            let loaded;
            let data = match classify_data {
                Some(d) => d,
                None => {
                    loaded = ClassifyData::load(config)?;
                    &loaded
                }
            };
            if config.experiment == Experiment::ClassifyVsCf {
                Ok(Report::Trials(run_classify_vs_cf(config, data)?))
            } else {
                Ok(Report::Trials(run_topk_sweep(config, data)?))
            }
        }
        Experiment::GramCheck => {
            let DataSource::Synthetic { p, .. } = config.data else {
                unreachable!("validated");
            };
            Ok(Report::Gram(run_gram_check(p, config.gram_m, config.rows, config.trials, config.seed)))
        }
    }
}
