use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use bear_core::bench::{
    self, write_gram_csv, write_results_csv, DataSource, Experiment, ExperimentConfig, Metric, Report,
};
use bear_core::data::Task;
use bear_core::optim::{Algo, ScheduleKind};
use bear_core::BenchError;

/// Run a feature-selection experiment and write its results as CSV.
#[derive(Parser, Debug)]
#[command(name = "bench", version)]
struct Cli {
    /// phase_transition, stepsize_sweep, classify_vs_cf, topk_sweep or gram_check
    experiment: String,
    /// `synthetic` or a VW-format training file.
    #[arg(long, default_value = "synthetic")]
    data: String,
    /// VW-format test file; defaults to the last 20% of --data.
    #[arg(long)]
    test: Option<PathBuf>,
    /// Comma-separated algorithms: bear, mission, sgd, olbfgs, fh.
    #[arg(long, value_delimiter = ',')]
    algo: Option<Vec<String>>,
    /// Comma-separated compression factors.
    #[arg(long, value_delimiter = ',')]
    cf: Option<Vec<f64>>,
    /// Comma-separated step sizes.
    #[arg(long, value_delimiter = ',', conflicts_with = "eta0")]
    eta: Option<Vec<f64>>,
    /// Single step size (initial step size for `invt`).
    #[arg(long)]
    eta0: Option<f64>,
    /// Sketch rows d.
    #[arg(long)]
    rows: Option<usize>,
    /// Fixed sketch width, instead of deriving it from --cf.
    #[arg(long)]
    width: Option<usize>,
    /// Heap capacity.
    #[arg(long)]
    topk: Option<usize>,
    /// Comma-separated k values for topk_sweep.
    #[arg(long, value_delimiter = ',')]
    k_grid: Option<Vec<usize>>,
    #[arg(long)]
    tau: Option<usize>,
    #[arg(long)]
    batch: Option<usize>,
    /// constant or invt (eta0 / (t + t0)).
    #[arg(long)]
    schedule: Option<String>,
    #[arg(long)]
    t0: Option<f64>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output path; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write one row per trial.
    #[arg(long)]
    per_trial: bool,
    /// Add a wall_ms column. Timings differ between runs.
    #[arg(long)]
    timing: bool,
    /// regression, binary or multiclass:C.
    #[arg(long)]
    task: Option<String>,
    /// accuracy or auc.
    #[arg(long)]
    metric: Option<String>,
    /// Synthetic task: features.
    #[arg(long)]
    p: Option<usize>,
    /// Synthetic task: rows.
    #[arg(long)]
    n: Option<usize>,
    /// Synthetic task: true support size.
    #[arg(long)]
    sparsity: Option<usize>,
    /// Synthetic step budget in epochs.
    #[arg(long)]
    epochs: Option<usize>,
    /// gram_check: total sketch columns m.
    #[arg(long)]
    m: Option<usize>,
}

fn config_err(msg: impl Into<String>) -> BenchError {
    BenchError::Config(msg.into())
}

fn build_config(cli: &Cli) -> Result<ExperimentConfig, BenchError> {
    let experiment: Experiment = cli.experiment.parse().map_err(config_err)?;
    let mut c = ExperimentConfig::preset(experiment);
    if let Some(algos) = &cli.algo {
        c.algos = algos
            .iter()
            .map(|a| a.parse::<Algo>())
            .collect::<Result<_, _>>()
            .map_err(config_err)?;
    }
    if let Some(v) = &cli.cf {
        c.cf_grid = v.clone();
    }
    if let Some(v) = &cli.eta {
        c.eta_grid = v.clone();
    }
    if let Some(v) = cli.eta0 {
        c.eta_grid = vec![v];
    }
    if let Some(v) = cli.rows {
        c.rows = v;
    }
    if cli.width.is_some() {
        c.width = cli.width;
    } else if cli.cf.is_some() {
        c.width = None;
    }
    if cli.topk.is_some() {
        c.top_k = cli.topk;
    }
    if let Some(v) = &cli.k_grid {
        c.k_grid = v.clone();
    }
    if let Some(v) = cli.tau {
        c.tau = v;
    }
    if let Some(v) = cli.batch {
        c.batch = v;
    }
    if let Some(s) = &cli.schedule {
        c.schedule = match s.as_str() {
            "constant" => ScheduleKind::Constant,
            "invt" => ScheduleKind::InverseTime,
            _ => return Err(config_err(format!("unknown schedule '{s}'"))),
        };
    }
    if let Some(v) = cli.t0 {
        c.t0 = v;
    }
    if let Some(v) = cli.trials {
        c.trials = v;
    }
    if let Some(v) = cli.seed {
        c.seed = v;
    }
    if let Some(t) = &cli.task {
        c.task = t.parse::<Task>().map_err(config_err)?;
    }
    if let Some(m) = &cli.metric {
        c.metric = match m.as_str() {
            "accuracy" => Metric::Accuracy,
            "auc" => Metric::Auc,
            _ => return Err(config_err(format!("unknown metric '{m}'"))),
        };
    }
    if let Some(v) = cli.epochs {
        c.epochs = v;
    }
    if let Some(v) = cli.m {
        c.gram_m = v;
    }
    if cli.data == "synthetic" {
        if cli.test.is_some() {
            return Err(config_err("--test needs a data file"));
        }
        let (p0, n0, k0) = match c.data {
            DataSource::Synthetic { p, n, k } => (p, n, k),
            DataSource::Files { .. } => (1000, 900, 8),
        };
        c.data = DataSource::Synthetic {
            p: cli.p.unwrap_or(p0),
            n: cli.n.unwrap_or(n0),
            k: cli.sparsity.unwrap_or(k0),
        };
    } else {
        if cli.p.is_some() || cli.n.is_some() || cli.sparsity.is_some() {
            return Err(config_err("--p, --n and --sparsity apply to synthetic data only"));
        }
        c.data = DataSource::Files {
            train: PathBuf::from(&cli.data),
            test: cli.test.clone(),
        };
    }
    c.validate()?;
    Ok(c)
}

fn execute(cli: &Cli) -> Result<(), BenchError> {
    let config = build_config(cli)?;
    let report = bench::run(&config, None)?;
    let sink: Box<dyn Write> = match &cli.out {
        Some(path) => Box::new(File::create(path)?),
        None => Box::new(io::stdout().lock()),
    };
    let mut w = BufWriter::new(sink);
    match report {
        Report::Trials(results) => write_results_csv(&mut w, &config, &results, cli.per_trial, cli.timing)?,
        Report::Gram(report) => write_gram_csv(&mut w, &config, &report)?,
    }
    w.flush()?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("bench: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
