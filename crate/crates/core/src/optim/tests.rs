use super::*;
use crate::loss::Example;
use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

fn sv(p: &[(u64, f64)]) -> SparseVec {
    SparseVec::from_sorted(p.to_vec()).unwrap()
}

fn batch(rows: &[(&[(u64, f64)], f64)]) -> Minibatch {
    Minibatch::new(rows.iter().map(|(x, y)| Example::new(sv(x), *y)).collect())
}

fn config(algo: Algo, task: Task) -> TrainerConfig {
    TrainerConfig {
        algo,
        task,
        rows: 3,
        width: 4096,
        top_k: 4,
        tau: 3,
        schedule: StepSchedule::constant(0.1),
        seed: 11,
        dim: 64,
    }
}

fn random_batch(rng: &mut Xoshiro256PlusPlus, b: usize, p: u64, task: Task) -> Minibatch {
    Minibatch::new(
        (0..b)
            .map(|_| {
                let x = SparseVec::from_pairs((0..4).map(|_| (rng.gen_range(0..p), rng.gen_range(-1.0..1.0)))).unwrap();
                let y = match task {
                    Task::Regression => rng.gen_range(-1.0..1.0),
                    Task::Binary => rng.gen_range(0..2) as f64,
                    Task::Multiclass(c) => rng.gen_range(0..c) as f64,
                };
                Example::new(x, y)
            })
            .collect(),
    )
}

fn sketched(state: &TrainerState) -> &[SketchedClass] {
    match &state.model {
        Model::Sketched(cs) => cs,
        _ => panic!("not sketched"),
    }
}

#[test]
fn active_set_examples() {
    assert_eq!(active_set(&batch(&[(&[(1, 1.0), (5, 2.0)], 0.0)])).ids(), &[1, 5]);
    assert_eq!(
        active_set(&batch(&[(&[(1, 1.0), (2, 1.0)], 0.0), (&[(2, 1.0), (3, 1.0)], 0.0)])).ids(),
        &[1, 2, 3]
    );
    assert!(active_set(&batch(&[(&[], 0.0), (&[], 1.0)])).is_empty());
}

#[test]
fn query_restricted_examples() {
    let mut state = TrainerState::new(config(Algo::Mission, Task::Regression)).unwrap();
    let active = FeatureSet::from_ids([7, 9]);
    assert!(query_restricted(&state, &active, 0).is_empty());
    let Model::Sketched(cs) = &mut state.model else { unreachable!() };
    cs[0].sketch.add(7, 3.0).unwrap();
    assert!(query_restricted(&state, &active, 0).is_empty(), "7 is not in the heap yet");
    let Model::Sketched(cs) = &mut state.model else { unreachable!() };
    cs[0].heap.offer(7, 3.0);
    assert_eq!(query_restricted(&state, &active, 0), sv(&[(7, 3.0)]));
    assert!(query_restricted(&state, &FeatureSet::from_ids([1]), 0).is_empty());
}

#[test]
fn first_bear_step_is_a_mission_step() {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(1);
    for task in [Task::Regression, Task::Binary, Task::Multiclass(3)] {
        let b = random_batch(&mut rng, 5, 40, task);
        let mut bear = TrainerState::new(config(Algo::Bear, task)).unwrap();
        let mut mission = TrainerState::new(config(Algo::Mission, task)).unwrap();
        let rb = bear.step(&b).unwrap();
        let rm = mission.step(&b).unwrap();
        assert_eq!(rb.grad_norm, rm.grad_norm);
        assert_eq!(rb.eta, rm.eta);
        for (cb, cm) in sketched(&bear).iter().zip(sketched(&mission)) {
            assert_eq!(cb.sketch.counters(), cm.sketch.counters());
            assert_eq!(cb.heap.snapshot(), cm.heap.snapshot());
        }
    }
}

#[test]
fn inverse_time_eta_in_reports() {
    let mut cfg = config(Algo::Bear, Task::Regression);
    cfg.schedule = StepSchedule::inverse_time(1.0, 10.0);
    let mut state = TrainerState::new(cfg).unwrap();
    let b = batch(&[(&[(1, 1.0)], 1.0)]);
    for t in 0..6u64 {
        let r = state.step(&b).unwrap();
        assert_eq!(r.eta, 1.0 / (t as f64 + 10.0));
        assert_eq!(state.t(), t + 1);
    }
}

#[test]
fn sgd_one_dimensional_hand_case() {
    let mut cfg = config(Algo::Sgd, Task::Regression);
    cfg.dim = 1;
    cfg.schedule = StepSchedule::constant(0.5);
    let mut state = TrainerState::new(cfg).unwrap();
    state.sgd_step(&batch(&[(&[(0, 1.0)], 1.0)])).unwrap();
    assert_eq!(state.dense_weights(0).unwrap(), &[0.5]);
}

#[test]
fn olbfgs_with_empty_history_is_sgd() {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(2);
    let b = random_batch(&mut rng, 6, 64, Task::Binary);
    let mut sgd = TrainerState::new(config(Algo::Sgd, Task::Binary)).unwrap();
    let mut ol = TrainerState::new(config(Algo::Olbfgs, Task::Binary)).unwrap();
    sgd.step(&b).unwrap();
    ol.step(&b).unwrap();
    assert_eq!(sgd.dense_weights(0), ol.dense_weights(0));
}

#[test]
fn zero_gradient_leaves_sketch_unchanged() {
    let mut state = TrainerState::new(config(Algo::Mission, Task::Regression)).unwrap();
    let before = sketched(&state)[0].sketch.clone();
    let r = state.mission_step(&batch(&[(&[(3, 1.0), (4, -2.0)], 0.0)])).unwrap();
    assert_eq!(r.grad_norm, 0.0);
    assert_eq!(sketched(&state)[0].sketch, before);
    assert_eq!(state.t(), 1);
}

#[test]
fn wrong_algorithm_is_rejected() {
    let mut state = TrainerState::new(config(Algo::Mission, Task::Regression)).unwrap();
    let b = batch(&[(&[(1, 1.0)], 1.0)]);
    assert!(matches!(state.bear_step(&b), Err(TrainError::WrongAlgo { .. })));
    assert!(matches!(state.sgd_step(&b), Err(TrainError::WrongAlgo { .. })));
    assert_eq!(state.t(), 0);
}

#[test]
fn non_finite_second_gradient_rolls_back() {
    let mut state = TrainerState::new(config(Algo::Bear, Task::Regression)).unwrap();
    let fine = batch(&[(&[(1, 1.0), (2, 0.5)], 1.0)]);
    state.step(&fine).unwrap();
    let cls = sketched(&state)[0].clone();
    let t = state.t();
    // The first gradient is finite; the one after the update overflows.
    let huge = batch(&[(&[(5, 1e200)], 1.0)]);
    let err = state.step(&huge).unwrap_err();
    assert!(matches!(err, TrainError::NonFiniteGradient { step } if step == t));
    let after = &sketched(&state)[0];
    assert_eq!(after.sketch, cls.sketch);
    assert_eq!(after.heap.snapshot(), cls.heap.snapshot());
    assert_eq!(after.history.pairs().count(), cls.history.pairs().count());
    assert_eq!(state.t(), t);
}

#[test]
fn dense_rollback_on_overflow() {
    let mut state = TrainerState::new(config(Algo::Olbfgs, Task::Regression)).unwrap();
    let before = state.dense_weights(0).unwrap().to_vec();
    assert!(state.step(&batch(&[(&[(5, 1e200)], 1.0)])).is_err());
    assert_eq!(state.dense_weights(0).unwrap(), &before[..]);
    assert_eq!(state.t(), 0);
}

#[test]
fn predict_examples() {
    let mut state = TrainerState::new(config(Algo::Mission, Task::Binary)).unwrap();
    assert_eq!(state.predict(&SparseVec::new()).scores, vec![0.0]);
    let Model::Sketched(cs) = &mut state.model else { unreachable!() };
    cs[0].sketch.add(9, 1.5).unwrap();
    // Every active feature is queried, heap member or not.
    assert_eq!(state.predict(&sv(&[(9, 2.0)])).scores, vec![3.0]);
    assert_eq!(state.predict(&sv(&[(9, 2.0)])).label(Task::Binary), 1.0);
}

#[test]
fn multiclass_argmax_matches_dense_evaluation() {
    let mut state = TrainerState::new(config(Algo::Mission, Task::Multiclass(2))).unwrap();
    let w = [[(1u64, 0.5), (2, -1.0)], [(1, -0.25), (2, 2.0)]];
    let Model::Sketched(cs) = &mut state.model else { unreachable!() };
    for (c, ws) in w.iter().enumerate() {
        for &(i, v) in ws {
            cs[c].sketch.add(i, v).unwrap();
        }
    }
    for x in [sv(&[(1, 1.0)]), sv(&[(2, 1.0)]), sv(&[(1, 3.0), (2, 0.5)]), sv(&[(1, -1.0), (2, 0.1)])] {
        let dense: Vec<f64> = w
            .iter()
            .map(|ws| ws.iter().map(|&(i, v)| v * x.get(i)).sum())
            .collect();
        let want = if dense[1] > dense[0] { 1.0 } else { 0.0 };
        let pred = state.predict(&x);
        assert_eq!(pred.scores, dense);
        assert_eq!(pred.label(Task::Multiclass(2)), want);
        let probs = pred.probabilities(Task::Multiclass(2));
        assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn select_features_shape() {
    let state = TrainerState::new(config(Algo::Bear, Task::Binary)).unwrap();
    assert_eq!(state.select_features(4).unwrap(), vec![vec![]]);
    let mut state = TrainerState::new(config(Algo::Bear, Task::Multiclass(3))).unwrap();
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(3);
    for _ in 0..20 {
        state.step(&random_batch(&mut rng, 4, 50, Task::Multiclass(3))).unwrap();
    }
    let sel = state.select_features(2).unwrap();
    assert_eq!(sel.len(), 3);
    for class in sel {
        assert!(class.len() <= 2);
        for w in class.windows(2) {
            assert!(w[0].1.abs() >= w[1].1.abs());
        }
    }
    let fh = TrainerState::new(config(Algo::Fh, Task::Binary)).unwrap();
    assert!(fh.select_features(2).is_err());
}

#[test]
fn seeded_runs_are_bit_identical() {
    for algo in Algo::ALL {
        let run = || {
            let mut state = TrainerState::new(config(algo, Task::Multiclass(3))).unwrap();
            let mut rng = Xoshiro256PlusPlus::seed_from_u64(4);
            let reports: Vec<StepReport> = (0..30)
                .map(|_| state.step(&random_batch(&mut rng, 3, 60, Task::Multiclass(3))).unwrap())
                .collect();
            (state, reports)
        };
        let (a, ra) = run();
        let (b, rb) = run();
        assert_eq!(ra, rb);
        match (&a.model, &b.model) {
            (Model::Sketched(x), Model::Sketched(y)) => {
                for (cx, cy) in x.iter().zip(y) {
                    assert_eq!(cx.sketch, cy.sketch);
                    assert_eq!(cx.heap.snapshot(), cy.heap.snapshot());
                    assert_eq!(cx.history, cy.history);
                }
            }
            (Model::Dense(x), Model::Dense(y)) => assert_eq!(x, y),
            (Model::Hashed { classes: x, .. }, Model::Hashed { classes: y, .. }) => assert_eq!(x, y),
            _ => unreachable!(),
        }
    }
}

/// Sparse batches over a feature space of size `p`, active set size fixed.
fn peak_memory(p: u64) -> (usize, usize) {
    let mut cfg = config(Algo::Bear, Task::Binary);
    cfg.width = 256;
    cfg.top_k = 16;
    cfg.tau = 5;
    let m = cfg.sketch_cells();
    let mut state = TrainerState::new(cfg).unwrap();
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(5);
    let mut max_active = 0;
    for _ in 0..200 {
        let b = random_batch(&mut rng, 8, p, Task::Binary);
        max_active = max_active.max(b.active_set().len());
        state.step(&b).unwrap();
    }
    let bound = m + 16 + 5 * max_active + max_active;
    (state.memory().peak, bound)
}

#[test]
fn peak_memory_does_not_grow_with_p() {
    let (small, bound_small) = peak_memory(1_000);
    let (large, bound_large) = peak_memory(1_000_000_000);
    assert!(small <= 8 * bound_small, "{small} vs {bound_small}");
    assert!(large <= 8 * bound_large, "{large} vs {bound_large}");
    // Same active-set sizes, same footprint, whatever the ambient dimension.
    assert!(large as f64 <= 1.2 * small as f64, "{large} vs {small}");
}

#[test]
fn checkpoint_round_trip_continues_identically() {
    let dir = tempfile::tempdir().unwrap();
    for algo in Algo::ALL {
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(6);
        let mut state = TrainerState::new(config(algo, Task::Multiclass(2))).unwrap();
        for _ in 0..15 {
            state.step(&random_batch(&mut rng, 3, 60, Task::Multiclass(2))).unwrap();
        }
        let path = dir.path().join(algo.name());
        state.save_checkpoint(&path).unwrap();
        let mut loaded = TrainerState::load_checkpoint(&path).unwrap();
        assert_eq!(loaded.t(), state.t());
        for _ in 0..10 {
            let b = random_batch(&mut rng, 3, 60, Task::Multiclass(2));
            assert_eq!(state.step(&b).unwrap(), loaded.step(&b).unwrap());
        }
        let x = sv(&[(1, 1.0), (7, -2.0), (33, 0.5)]);
        assert_eq!(state.predict(&x), loaded.predict(&x));
    }
}

#[test]
fn fh_shared_bucket_and_determinism() {
    let hasher = FeatureHasher::new(8, 3);
    let (a, b) = (0..1000u64)
        .flat_map(|a| (a + 1..1000).map(move |b| (a, b)))
        .find(|&(a, b)| hasher.bucket(a) == hasher.bucket(b))
        .unwrap();
    let x = sv(&[(a, 1.0), (b, 1.0)]);
    let hx = hasher.remap(&x);
    assert!(hx.nnz() <= 1);
    let expect = hasher.sign(a) + hasher.sign(b);
    assert_eq!(hx.get(hasher.bucket(a)), expect);

    let mut cfg = config(Algo::Fh, Task::Binary);
    cfg.width = 4;
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(7);
    let batches: Vec<Minibatch> = (0..20).map(|_| random_batch(&mut rng, 4, 40, Task::Binary)).collect();
    let model = fh_train(&cfg, batches.clone()).unwrap();
    let again = fh_train(&cfg, batches).unwrap();
    let x = sv(&[(3, 1.0), (17, -0.5)]);
    assert_eq!(fh_predict(&model, &x), fh_predict(&again, &x));
    assert_eq!(model.weights(0).len(), 12);
}

#[test]
fn lossless_fh_matches_dense_sgd() {
    let p = 20u64;
    // A seed whose hash is injective on the feature ids.
    let (seed, buckets) = (0..)
        .map(|s| (s, 64usize))
        .find(|&(s, m)| {
            let h = FeatureHasher::new(m, s);
            let buckets: FeatureSet = (0..p).map(|i| h.bucket(i)).collect();
            buckets.len() == p as usize
        })
        .unwrap();
    let mut fh_cfg = config(Algo::Fh, Task::Binary);
    fh_cfg.rows = 1;
    fh_cfg.width = buckets;
    fh_cfg.seed = seed;
    let mut sgd_cfg = config(Algo::Sgd, Task::Binary);
    sgd_cfg.dim = p as usize;
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(8);
    let batches: Vec<Minibatch> = (0..50).map(|_| random_batch(&mut rng, 4, p, Task::Binary)).collect();
    let fh = fh_train(&fh_cfg, batches.clone()).unwrap();
    let mut sgd = TrainerState::new(sgd_cfg).unwrap();
    for b in &batches {
        sgd.step(b).unwrap();
    }
    let test = random_batch(&mut rng, 200, p, Task::Binary);
    for e in test.examples() {
        let a = fh_predict(&fh, &e.x);
        let b = sgd.predict(&e.x);
        assert!((a.scores[0] - b.scores[0]).abs() < 1e-12);
        assert_eq!(a.label(Task::Binary), b.label(Task::Binary));
    }
}

#[test]
fn olbfgs_quadratic_trend_with_inverse_time() {
    let p = 6u64;
    let truth: Vec<f64> = (0..p).map(|i| 1.0 - 0.3 * i as f64).collect();
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(9);
    let make = |rng: &mut Xoshiro256PlusPlus| {
        Minibatch::new(
            (0..8)
                .map(|_| {
                    let x = SparseVec::from_dense(&(0..p).map(|_| rng.gen_range(-1.0..1.0)).collect::<Vec<_>>());
                    let y = truth.score(&x);
                    Example::new(x, y)
                })
                .collect(),
        )
    };
    let eval = make(&mut rng);
    let mut cfg = config(Algo::Olbfgs, Task::Regression);
    cfg.dim = p as usize;
    cfg.schedule = StepSchedule::inverse_time(5.0, 10.0);
    let mut state = TrainerState::new(cfg).unwrap();
    let start = state.loss_on(&eval);
    let mut best = start;
    for _ in 0..300 {
        state.step(&make(&mut rng)).unwrap();
        best = best.min(state.loss_on(&eval));
    }
    assert!(best < 1e-3 * start, "{best} vs {start}");
}
