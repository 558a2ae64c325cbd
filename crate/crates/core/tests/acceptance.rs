//! One check per acceptance criterion. Each test prints a single
//! `PASS`/`FAIL` line with the measured values, then asserts.
//!
//! Criterion 9 needs the RCV1 binary files, given through `BEAR_RCV1_TRAIN`
//! and `BEAR_RCV1_TEST` (vw format). Without them it reports `BLOCKED`.

use std::io::Write;
use std::path::PathBuf;
use std::process::Command;
use std::sync::Mutex;

use bear_core::bench::{self, aggregate, Aggregate, ClassifyData, Experiment, ExperimentConfig, Report};
use bear_core::data::{gen_synthetic, read_vw_file, Dataset, SyntheticSpec, Task, DEFAULT_INGEST_SEED};
use bear_core::loss::{
    grad_logistic, grad_mse, grad_softmax_all, logistic_loss, mse_loss, softmax_loss, Example, Minibatch,
};
use bear_core::optim::{Algo, StepSchedule, TrainerConfig, TrainerState};
use bear_core::{direction, CountSketch, CurvatureHistory, SparseVec};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

// Experiments share the CPU; running them one at a time keeps the timings honest.
static SERIAL: Mutex<()> = Mutex::new(());

/// Writes past the harness's output capture, so the line shows up for
/// passing tests too.
fn say(line: &str) {
    let mut out = std::io::stdout().lock();
    writeln!(out, "{line}").unwrap();
    out.flush().unwrap();
}

fn report(criterion: u32, pass: bool, detail: &str) -> bool {
    say(&format!("{} criterion {criterion}: {detail}", if pass { "PASS" } else { "FAIL" }));
    pass
}

fn trials(config: &ExperimentConfig) -> Vec<Aggregate> {
    match bench::run(config, None).unwrap() {
        Report::Trials(r) => aggregate(&r),
        Report::Gram(_) => unreachable!(),
    }
}

fn find(aggs: &[Aggregate], algo: Algo, cf: f64) -> &Aggregate {
    aggs.iter()
        .find(|a| a.algo == algo && (a.cf - cf).abs() < 1e-9)
        .unwrap()
}

#[test]
fn c01_phase_transition() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let config = ExperimentConfig {
        cf_grid: vec![3.0, 5.0 / 3.0],
        ..ExperimentConfig::preset(Experiment::PhaseTransition)
    };
    let aggs = trials(&config);
    let bear3 = find(&aggs, Algo::Bear, 3.0).success;
    let mission3 = find(&aggs, Algo::Mission, 3.0).success;
    let bear167 = find(&aggs, Algo::Bear, 5.0 / 3.0).success;
    let pass = bear3 >= 0.35 && mission3 <= 0.10 && bear167 >= 0.85;
    assert!(report(
        1,
        pass,
        &format!(
            "{} trials, eta {}: BEAR@CF3 {bear3:.3} (>= 0.35), MISSION@CF3 {mission3:.3} (<= 0.10), BEAR@CF1.67 {bear167:.3} (>= 0.85)",
            config.trials, config.eta_grid[0]
        )
    ));
}

#[test]
fn c02_stepsize_robustness() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let config = ExperimentConfig::preset(Experiment::StepsizeSweep);
    let aggs = trials(&config);
    let curve = |algo: Algo| -> Vec<f64> {
        config
            .eta_grid
            .iter()
            .map(|&eta| aggs.iter().find(|a| a.algo == algo && a.eta == eta).unwrap().success)
            .collect()
    };
    let longest_run = |s: &[f64]| {
        let (mut best, mut cur) = (0, 0);
        for &v in s {
            cur = if v >= 0.5 { cur + 1 } else { 0 };
            best = best.max(cur);
        }
        best
    };
    let bear = curve(Algo::Bear);
    let mission = curve(Algo::Mission);
    let bear_run = longest_run(&bear);
    let mission_good = mission.iter().filter(|&&v| v >= 0.5).count();
    let peak = config.eta_grid[mission
        .iter()
        .enumerate()
        .fold(0, |best, (i, &v)| if v > mission[best] { i } else { best })];
    let peak_ok = (peak.log10() - (1e-4f64).log10()).abs() <= 1.0 + 1e-9;
    let pass = bear_run >= 3 && mission_good <= 2 && peak_ok;
    assert!(report(
        2,
        pass,
        &format!(
            "eta {:?}: BEAR {bear:?} ({bear_run} contiguous decades >= 0.5, need 3), MISSION {mission:?} ({mission_good} decades >= 0.5, max 2; peak {peak:e})",
            config.eta_grid
        )
    ));
}

/// Fixed vector with four dominant entries and a small deterministic tail.
fn dominant_vector() -> (Vec<f64>, [usize; 4]) {
    let mut z = vec![0.0; 64];
    let mut s = 12345u64;
    for v in z.iter_mut() {
        s = bear_core::hash::mix64(s);
        *v = ((s >> 11) as f64 / (1u64 << 53) as f64 - 0.5) * 0.6;
    }
    let top = [3, 17, 40, 58];
    for (&i, v) in top.iter().zip([10.0, -8.0, 6.0, -5.0]) {
        z[i] = v;
    }
    (z, top)
}

/// Median over rows of the signed bucket sums, recomputed from the hash functions.
fn replay_estimate(z: &[f64], sk: &CountSketch, i: usize) -> f64 {
    let mut est: Vec<f64> = (0..sk.rows())
        .map(|r| {
            let h = sk.hash_index(r, i as u64);
            let sum: f64 = (0..z.len())
                .filter(|&j| sk.hash_index(r, j as u64) == h)
                .map(|j| sk.hash_sign(r, j as u64) * z[j])
                .sum();
            sk.hash_sign(r, i as u64) * sum
        })
        .collect();
    est.sort_by(|a, b| a.total_cmp(b));
    let n = est.len();
    if n % 2 == 1 {
        est[n / 2]
    } else {
        0.5 * (est[n / 2 - 1] + est[n / 2])
    }
}

#[test]
fn c03_count_sketch_guarantee() {
    // Calibrated once with `replay_estimate` on seeds 1_000_000..1_000_500:
    // 3.2% of trials exceed eps = 0.1; delta adds three standard errors.
    const EPS: f64 = 0.1;
    const DELTA: f64 = 0.06;
    let (z, top) = dominant_vector();
    let norm = z.iter().map(|v| v * v).sum::<f64>().sqrt();
    let (mut failures, mut misses, mut mismatch) = (0, 0, 0.0f64);
    let n = 500;
    for seed in 0..n as u64 {
        let mut sk = CountSketch::new(5, 16, seed).unwrap();
        sk.add_sparse(&SparseVec::from_dense(&z)).unwrap();
        let queries: Vec<f64> = (0..z.len()).map(|i| sk.query(i as u64)).collect();
        let mut worst = 0.0f64;
        for &i in &top {
            let oracle = replay_estimate(&z, &sk, i);
            mismatch = mismatch.max((queries[i] - oracle).abs());
            worst = worst.max((oracle - z[i]).abs());
        }
        failures += (worst > EPS * norm) as usize;
        let mut order: Vec<usize> = (0..z.len()).collect();
        order.sort_by(|&a, &b| queries[b].abs().total_cmp(&queries[a].abs()).then(a.cmp(&b)));
        let mut found = order[..4].to_vec();
        found.sort_unstable();
        misses += (found != top) as usize;
    }
    let frac = failures as f64 / n as f64;
    let miss_frac = misses as f64 / n as f64;
    let pass = frac <= DELTA && mismatch < 1e-12;
    // Ranking every coordinate by |query| is a stronger demand than bounded error
    // on the heavy ones: at c = 16 a tail feature sharing buckets with heavy
    // entries in most rows often outranks one of them.
    say(&format!("INFO criterion 3: top-4 by |query| equals the true top-4 in {:.3} of trials", 1.0 - miss_frac));
    assert!(report(
        3,
        pass,
        &format!(
            "{n} trials, eps {EPS}, delta {DELTA}: error > eps|z| on the top-k in {frac:.3} of trials, query vs replay {mismatch:.1e}"
        )
    ));
}

fn dense_bfgs(g: &DVector<f64>, pairs: &[(DVector<f64>, DVector<f64>)]) -> DVector<f64> {
    let n = g.len();
    let Some((sl, rl)) = pairs.last() else {
        return g.clone();
    };
    let mut h = DMatrix::<f64>::identity(n, n) * (rl.dot(sl) / rl.dot(rl));
    for (s, r) in pairs {
        let rho = 1.0 / r.dot(s);
        let left = DMatrix::identity(n, n) - s * r.transpose() * rho;
        let right = DMatrix::identity(n, n) - r * s.transpose() * rho;
        h = &left * h * &right + s * s.transpose() * rho;
    }
    h * g
}

#[test]
fn c04_lbfgs_oracle() {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(404);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let dim = rng.gen_range(1..=20);
        let tau = rng.gen_range(1..=5);
        let pushes = rng.gen_range(0..=8);
        // Curvature pairs from a random SPD matrix, so every pair is admissible.
        let a = DMatrix::from_fn(dim, dim, |_, _| rng.gen_range(-1.0..1.0));
        let spd = &a * a.transpose() + DMatrix::identity(dim, dim) * 0.5;
        let mut history = CurvatureHistory::new(tau);
        let mut kept: Vec<(DVector<f64>, DVector<f64>)> = Vec::new();
        for _ in 0..pushes {
            let s = DVector::from_fn(dim, |_, _| rng.gen_range(-1.0..1.0));
            let r = &spd * &s;
            assert!(history.push_pair(SparseVec::from_dense(s.as_slice()), SparseVec::from_dense(r.as_slice())));
            kept.push((s, r));
            if kept.len() > tau {
                kept.remove(0);
            }
        }
        let g = DVector::from_fn(dim, |_, _| rng.gen_range(-1.0..1.0));
        let z = direction(&SparseVec::from_dense(g.as_slice()), &history).to_dense(dim);
        let want = dense_bfgs(&g, &kept);
        let err = (DVector::from_vec(z) - &want).norm() / want.norm().max(f64::MIN_POSITIVE);
        worst = worst.max(err);
    }
    assert!(report(4, worst <= 1e-10, &format!("1000 instances, max relative error {worst:.2e} (<= 1e-10)")));
}

/// Sketch seed whose index hashes are injective on `0..p` in every row.
fn collision_free_seed(rows: usize, width: usize, p: u64) -> u64 {
    (0..)
        .find(|&seed| {
            let sk = CountSketch::new(rows, width, seed).unwrap();
            (0..rows).all(|r| {
                let mut seen = vec![false; width];
                (0..p).all(|i| !std::mem::replace(&mut seen[sk.hash_index(r, i)], true))
            })
        })
        .unwrap()
}

fn dense_batch(rng: &mut Xoshiro256PlusPlus, p: usize, b: usize, truth: &[f64]) -> Minibatch {
    Minibatch::new(
        (0..b)
            .map(|_| {
                let x: Vec<f64> = (0..p).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let y = x.iter().zip(truth).map(|(a, w)| a * w).sum::<f64>() + rng.gen_range(-0.1..0.1);
                Example::new(SparseVec::from_dense(&x), y)
            })
            .collect(),
    )
}

#[test]
fn c05_collision_free_equivalence() {
    let mut worst = [0.0f64; 2];
    for (case, p) in [8usize, 20, 32].into_iter().enumerate() {
        let width = p * p;
        let seed = collision_free_seed(3, width, p as u64);
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(500 + case as u64);
        let truth: Vec<f64> = (0..p).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let batches: Vec<Minibatch> = (0..100).map(|_| dense_batch(&mut rng, p, 6, &truth)).collect();
        for (slot, (sketched, dense)) in [(Algo::Bear, Algo::Olbfgs), (Algo::Mission, Algo::Sgd)].into_iter().enumerate() {
            let base = TrainerConfig {
                task: Task::Regression,
                rows: 3,
                width,
                top_k: p,
                tau: 5,
                schedule: StepSchedule::constant(0.05),
                seed,
                dim: p,
                ..TrainerConfig::default()
            };
            let mut a = TrainerState::new(TrainerConfig { algo: sketched, ..base.clone() }).unwrap();
            let mut b = TrainerState::new(TrainerConfig { algo: dense, ..base }).unwrap();
            for batch in &batches {
                a.step(batch).unwrap();
                b.step(batch).unwrap();
                let w = b.dense_weights(0).unwrap();
                let sk = a.sketch(0).unwrap();
                let dev = (0..p).map(|i| (sk.query(i as u64) - w[i]).abs()).fold(0.0, f64::max);
                worst[slot] = worst[slot].max(dev);
            }
        }
    }
    let pass = worst[0] <= 1e-8 && worst[1] <= 1e-8;
    assert!(report(
        5,
        pass,
        &format!(
            "p in {{8,20,32}}, c = p^2, 100 steps: |BEAR - oLBFGS| {:.2e}, |MISSION - SGD| {:.2e} (<= 1e-8)",
            worst[0], worst[1]
        )
    ));
}

fn fd_error(loss: &dyn Fn(&[f64]) -> f64, grad: &[f64], beta: &[f64]) -> f64 {
    let mut b = beta.to_vec();
    let fd: Vec<f64> = (0..beta.len())
        .map(|i| {
            let h = 1e-6 * beta[i].abs().max(1.0);
            b[i] = beta[i] + h;
            let up = loss(&b);
            b[i] = beta[i] - h;
            let down = loss(&b);
            b[i] = beta[i];
            (up - down) / (2.0 * h)
        })
        .collect();
    let diff = fd.iter().zip(grad).map(|(a, g)| (a - g).powi(2)).sum::<f64>().sqrt();
    let scale = grad.iter().map(|g| g * g).sum::<f64>().sqrt().max(1e-3);
    diff / scale
}

#[test]
fn c06_gradients_match_finite_differences() {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(606);
    let mut worst = [0.0f64; 3];
    for _ in 0..100 {
        let dim = rng.gen_range(1..=10);
        let classes = rng.gen_range(2..=4);
        let rows: Vec<SparseVec> = (0..rng.gen_range(1..=6))
            .map(|_| {
                let pairs: Vec<(u64, f64)> = (0..dim as u64)
                    .filter_map(|i| rng.gen_bool(0.7).then(|| (i, rng.gen_range(-2.0..2.0))))
                    .collect();
                SparseVec::from_sorted(pairs).unwrap()
            })
            .collect();
        let batch_with = |ys: Vec<f64>| Minibatch::new(rows.iter().cloned().zip(ys).map(|(x, y)| Example::new(x, y)).collect());
        let mse = batch_with(rows.iter().map(|_| rng.gen_range(-3.0..3.0)).collect());
        let bin = batch_with(rows.iter().map(|_| rng.gen_range(0..2) as f64).collect());
        let multi = batch_with(rows.iter().map(|_| rng.gen_range(0..classes) as f64).collect());
        let beta: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();

        let g = grad_mse(&beta, &mse).to_dense(dim);
        worst[0] = worst[0].max(fd_error(&|b| mse_loss(b, &mse), &g, &beta));
        let g = grad_logistic(&beta, &bin).to_dense(dim);
        worst[1] = worst[1].max(fd_error(&|b| logistic_loss(b, &bin), &g, &beta));

        let betas: Vec<Vec<f64>> = (0..classes).map(|_| (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        let refs: Vec<&[f64]> = betas.iter().map(|b| b.as_slice()).collect();
        let flat: Vec<f64> = betas.concat();
        let grads: Vec<f64> = grad_softmax_all(&refs, &multi).iter().flat_map(|g| g.to_dense(dim)).collect();
        let loss = |f: &[f64]| {
            let refs: Vec<&[f64]> = f.chunks(dim).collect();
            softmax_loss(&refs, &multi)
        };
        worst[2] = worst[2].max(fd_error(&loss, &grads, &flat));
    }
    let pass = worst.iter().all(|&w| w <= 1e-5);
    assert!(report(
        6,
        pass,
        &format!(
            "100 instances, max relative error mse {:.1e}, logistic {:.1e}, softmax {:.1e} (<= 1e-5)",
            worst[0], worst[1], worst[2]
        )
    ));
}

#[test]
fn c07_inverse_time_decay() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let checkpoints: Vec<u64> = (0..=20).map(|i| (100.0 * 10f64.powf(i as f64 / 10.0)).round() as u64).collect();
    let seeds: Vec<u64> = (0..20).collect();
    let curves = bench::run_jobs(&seeds, |&seed| {
        let data = gen_synthetic(SyntheticSpec { p: 1000, n: 900, k: 8, seed }).unwrap();
        let config = TrainerConfig {
            algo: Algo::Bear,
            task: Task::Regression,
            rows: 3,
            width: 200,
            top_k: 8,
            tau: 5,
            schedule: StepSchedule::inverse_time(10.0, 100.0),
            seed: bear_core::hash::combine(seed, 2),
            dim: 0,
        };
        let mut state = TrainerState::new(config).unwrap();
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(bear_core::hash::combine(seed, 3));
        let mut out = Vec::with_capacity(checkpoints.len());
        for t in 1..=*checkpoints.last().unwrap() {
            state.step(&data.sample_batch(&mut rng, 10)).unwrap();
            if checkpoints.contains(&t) {
                let beta = SparseVec::from_pairs(state.heap(0).unwrap().snapshot().into_iter().map(|(i, _)| (i, state.sketch(0).unwrap().query(i)))).unwrap();
                out.push(data.loss(&beta) * t as f64);
            }
        }
        out
    });
    let medians: Vec<f64> = (0..checkpoints.len())
        .map(|c| {
            let mut v: Vec<f64> = curves.iter().map(|curve| curve[c]).collect();
            v.sort_by(|a, b| a.total_cmp(b));
            0.5 * (v[9] + v[10])
        })
        .collect();
    let max = medians.iter().cloned().fold(0.0, f64::max);
    let min = medians.iter().cloned().fold(f64::INFINITY, f64::min);
    let ratio = max / min;
    say(&format!(
        "INFO criterion 7: max_t (loss*t) / (loss*t at t=100) = {:.3}",
        max / medians[0]
    ));
    assert!(report(
        7,
        ratio <= 10.0,
        &format!(
            "BEAR, eta_t = 10/(t+100), 20 seeds: median loss*t from {:.3e} (t=100) to {:.3e} (t=1e4), max/min {ratio:.3e} (<= 10)",
            medians[0],
            medians.last().unwrap()
        )
    ));
}

#[test]
fn c08_gram_concentration() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let pilot = bench::run_gram_check(2000, 400, 5, 50, 0);
    let fresh = bench::run_gram_check(2000, 400, 5, 50, 1);
    let expected = 2000.0 / 400.0;
    let mean_dev = [pilot.mean_eig(), fresh.mean_eig()]
        .iter()
        .map(|m| (m - expected).abs() / expected)
        .fold(0.0, f64::max);
    let stability = (fresh.eps_mean() - pilot.eps_mean()).abs() / pilot.eps_mean();
    let pass = mean_dev <= 0.05 && stability <= 0.20;
    assert!(report(
        8,
        pass,
        &format!(
            "p=2000 m=400 d=5, 2x50 trials: mean eig {:.4}/{:.4} vs {expected} (dev {mean_dev:.1e}, <= 5%), eps_emp {:.4}/{:.4} (change {:.1}%, <= 20%), batch max {:.4}/{:.4}",
            pilot.mean_eig(),
            fresh.mean_eig(),
            pilot.eps_mean(),
            fresh.eps_mean(),
            100.0 * stability,
            pilot.eps_max(),
            fresh.eps_max()
        )
    ));
}

#[test]
fn c09_rcv1_desk_scale() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let (Some(train), Some(test)) = (std::env::var_os("BEAR_RCV1_TRAIN"), std::env::var_os("BEAR_RCV1_TEST")) else {
        report(9, false, "BLOCKED: set BEAR_RCV1_TRAIN and BEAR_RCV1_TEST to the RCV1 binary files in vw format");
        panic!("RCV1 data not available");
    };
    let train = read_vw_file(&PathBuf::from(train), Task::Binary, DEFAULT_INGEST_SEED).unwrap();
    let mut test = read_vw_file(&PathBuf::from(test), Task::Binary, DEFAULT_INGEST_SEED).unwrap();
    test.examples.truncate(50_000);
    let data = ClassifyData::new(train, Dataset::new(Task::Binary, test.examples)).unwrap();
    let config = ExperimentConfig {
        algos: vec![Algo::Bear, Algo::Mission],
        ..ExperimentConfig::preset(Experiment::ClassifyVsCf)
    };
    let results = match bench::run(&config, Some(&data)).unwrap() {
        Report::Trials(r) => aggregate(&r),
        Report::Gram(_) => unreachable!(),
    };
    let gaps: Vec<(f64, f64, f64)> = config
        .cf_grid
        .iter()
        .map(|&cf| (cf, find(&results, Algo::Bear, cf).accuracy, find(&results, Algo::Mission, cf).accuracy))
        .collect();
    let dominates = gaps.iter().all(|&(_, b, m)| b >= m);
    let widening = gaps.last().map(|g| g.1 - g.2) >= gaps.first().map(|g| g.1 - g.2);
    assert!(report(
        9,
        dominates && widening,
        &format!("(cf, BEAR acc, MISSION acc) {gaps:?}; BEAR >= MISSION everywhere: {dominates}, gap widens: {widening}")
    ));
}

fn run_cli(args: &[&str], out: &std::path::Path) -> Vec<u8> {
    let status = Command::new(env!("CARGO_BIN_EXE_bench"))
        .args(args)
        .arg("--out")
        .arg(out)
        .status()
        .unwrap();
    assert!(status.success());
    std::fs::read(out).unwrap()
}

#[test]
fn c10_determinism() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let dir = tempfile::tempdir().unwrap();
    let runs: [&[&str]; 3] = [
        &["phase_transition", "--trials", "4", "--cf", "3,1.6666666666666667", "--per-trial", "--seed", "7"],
        &["stepsize_sweep", "--trials", "2", "--eta", "0.001,0.1", "--schedule", "invt", "--per-trial"],
        &["gram_check", "--trials", "3", "--seed", "5"],
    ];
    let mut identical = true;
    let mut bytes = 0;
    for (i, args) in runs.iter().enumerate() {
        let a = run_cli(args, &dir.path().join(format!("{i}a.csv")));
        let b = run_cli(args, &dir.path().join(format!("{i}b.csv")));
        identical &= a == b && !a.is_empty();
        bytes += a.len();
    }
    // The library route must agree with the binary.
    let config = ExperimentConfig {
        trials: 4,
        cf_grid: vec![3.0, 5.0 / 3.0],
        seed: 7,
        ..ExperimentConfig::preset(Experiment::PhaseTransition)
    };
    let mut lib = Vec::new();
    match bench::run(&config, None).unwrap() {
        Report::Trials(r) => bench::write_results_csv(&mut lib, &config, &r, true, false).unwrap(),
        Report::Gram(_) => unreachable!(),
    }
    let cli = std::fs::read(dir.path().join("0a.csv")).unwrap();
    let agrees = lib == cli;
    assert!(report(
        10,
        identical && agrees,
        &format!("3 experiments run twice through the CLI ({bytes} bytes): identical {identical}; library CSV equals CLI CSV: {agrees}")
    ));
}
