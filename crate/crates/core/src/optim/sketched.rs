//! Steps of the two Count-Sketch trainers.

use super::{all_finite, combined_norm, gradients, Model, SketchedClass, StepReport, TrainerState};
use crate::error::TrainError;
use crate::lbfgs::direction;
use crate::loss::Minibatch;
use crate::sketch::SketchUndo;
use crate::optim::Algo;
use crate::sketch::CountSketch;
use crate::svec::{restrict, sub, FeatureSet, SparseVec};
use crate::topk::TopKHeap;

/// Queried weights of `active ∩ heap`, zero elsewhere.
pub(crate) fn restricted(class: &SketchedClass, active: &FeatureSet) -> SparseVec {
    restricted_with(&class.sketch, &class.heap, active)
}

fn restricted_with(sketch: &CountSketch, heap: &TopKHeap, active: &FeatureSet) -> SparseVec {
    let mut ids: Vec<u64> = heap
        .members()
        .iter()
        .filter(|&id| active.contains(id))
        .collect();
    ids.sort_unstable();
    let mut out = SparseVec::with_capacity(ids.len());
    for id in ids {
        let w = sketch.query(id);
        if w != 0.0 {
            out.push_unchecked(id, w);
        }
    }
    out
}

/// Weights of class `class` over `active ∩ top-k`, as the optimizer sees them.
/// Returns an empty vector for non-sketched trainers.
pub fn query_restricted(state: &TrainerState, active: &FeatureSet, class: usize) -> SparseVec {
    match &state.model {
        Model::Sketched(cs) => restricted(&cs[class], active),
        _ => SparseVec::new(),
    }
}

/// Offers every feature of `changed` to the heap with its current sketch value.
fn refresh_heap(class: &mut SketchedClass, changed: &SparseVec) {
    for id in changed.ids() {
        let w = class.sketch.query(id);
        class.heap.offer(id, w);
    }
}

fn rollback(classes: &mut [SketchedClass], undos: Vec<SketchUndo>) {
    for (c, u) in classes.iter_mut().zip(undos) {
        c.sketch.undo(u);
    }
}

fn resident(classes: &[SketchedClass]) -> usize {
    classes
        .iter()
        .map(|c| c.sketch.size() + c.heap.len() + c.history.stored_entries())
        .sum()
}

fn add_all(sketches: &mut [SketchedClass], updates: &[SparseVec]) -> Result<Vec<SketchUndo>, TrainError> {
    let mut undos = Vec::with_capacity(updates.len());
    for (c, u) in sketches.iter_mut().zip(updates) {
        match c.sketch.add_sparse_logged(u) {
            Ok(log) => undos.push(log),
            Err(e) => {
                rollback(sketches, undos);
                return Err(e.into());
            }
        }
    }
    Ok(undos)
}

impl TrainerState {
    /// One iteration of sketched online L-BFGS, per class:
    ///
    /// 1. query `beta_t` on `A_t ∩ top-k` and compute `g_t = g(beta_t, batch)`;
    /// 2. `z = H g_t` from the curvature history, restricted to `A_t`;
    /// 3. add `-eta * z` to the sketch and offer the changed features to the
    ///    heap with their fresh values;
    /// 4. re-query `beta_{t+1}` and compute `g(beta_{t+1}, batch)` on the same
    ///    batch;
    /// 5. store `(beta_{t+1} - beta_t, g(beta_{t+1}) - g_t)` if it has
    ///    positive curvature.
    ///
    /// A non-finite gradient aborts the step and leaves the state untouched.
    pub fn bear_step(&mut self, batch: &Minibatch) -> Result<StepReport, TrainError> {
        self.expect_algo(Algo::Bear, "bear_step")?;
        self.sketched_step(batch, true)
    }

    /// One iteration of sketched SGD: add `-eta * g(beta_t, batch)` to the
    /// sketch and offer the gradient's support to the heap.
    pub fn mission_step(&mut self, batch: &Minibatch) -> Result<StepReport, TrainError> {
        self.expect_algo(Algo::Mission, "mission_step")?;
        self.sketched_step(batch, false)
    }

    fn sketched_step(&mut self, batch: &Minibatch, second_order: bool) -> Result<StepReport, TrainError> {
        let task = self.config.task;
        let step = self.t;
        let eta = self.config.schedule.eta(step);
        let Model::Sketched(classes) = &mut self.model else {
            unreachable!("sketched step on a dense model");
        };
        let active = batch.active_set();

        let beta_t: Vec<SparseVec> = classes.iter().map(|c| restricted(c, active)).collect();
        let g_t = {
            let refs: Vec<&SparseVec> = beta_t.iter().collect();
            gradients(task, &refs, batch)
        };
        if !all_finite(&g_t) {
            return Err(TrainError::NonFiniteGradient { step });
        }
        let grad_norm = combined_norm(&g_t);

        let changed: Vec<SparseVec> = if second_order {
            classes
                .iter()
                .zip(&g_t)
                .map(|(c, g)| restrict(&direction(g, &c.history), active))
                .collect()
        } else {
            g_t.clone()
        };
        let updates: Vec<SparseVec> = changed.iter().map(|z| z.scale(-eta)).collect();
        let undos = add_all(classes, &updates)?;
        let mut transient = active.len()
            + beta_t.iter().chain(&g_t).chain(&changed).chain(&updates).map(|v| v.nnz()).sum::<usize>()
            + undos.iter().map(|u| u.len()).sum::<usize>();

        let mut accepted = false;
        if second_order {
            // The heap must not change before a possible rollback.
            let mut heaps_after: Vec<_> = classes.iter().map(|c| c.heap.clone()).collect();
            for ((c, heap), z) in classes.iter().zip(heaps_after.iter_mut()).zip(&changed) {
                for id in z.ids() {
                    heap.offer(id, c.sketch.query(id));
                }
            }
            let beta_next: Vec<SparseVec> = classes
                .iter()
                .zip(&heaps_after)
                .map(|(c, heap)| restricted_with(&c.sketch, heap, active))
                .collect();
            let g_next = {
                let refs: Vec<&SparseVec> = beta_next.iter().collect();
                gradients(task, &refs, batch)
            };
            if !all_finite(&g_next) {
                rollback(classes, undos);
                return Err(TrainError::NonFiniteGradient { step });
            }
            for (((c, heap), (bn, bt)), (gn, g)) in classes
                .iter_mut()
                .zip(heaps_after)
                .zip(beta_next.iter().zip(&beta_t))
                .zip(g_next.iter().zip(&g_t))
            {
                c.heap = heap;
                let s = sub(bn, bt);
                let r = sub(gn, g);
                transient += bn.nnz() + gn.nnz() + s.nnz() + r.nnz();
                accepted |= c.history.push_pair(s, r);
            }
        } else {
            for (c, g) in classes.iter_mut().zip(&changed) {
                refresh_heap(c, g);
            }
        }

        self.meter.record(resident(classes) + transient);
        self.t += 1;
        Ok(StepReport {
            grad_norm,
            eta,
            accepted_pair: accepted,
        })
    }
}
