//! Capacity-bounded heap of the heaviest features by weight magnitude.
//!
//! The root of the binary heap is the weakest retained entry. Strength orders
//! by `|weight|` and, on equal magnitude, by smaller feature id. A position
//! index makes re-offering a retained feature an in-place `O(log k)` update.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::io::{BufRead, Write};

use crate::svec::{FeatureId, FeatureSet};

#[derive(Clone, Copy, Debug, PartialEq)]
struct Entry {
    id: FeatureId,
    weight: f64,
}

impl Entry {
    /// `Greater` means `self` is the stronger entry.
    fn strength_cmp(&self, other: &Entry) -> Ordering {
        self.weight
            .abs()
            .total_cmp(&other.weight.abs())
            .then_with(|| other.id.cmp(&self.id))
    }

    fn weaker_than(&self, other: &Entry) -> bool {
        self.strength_cmp(other) == Ordering::Less
    }
}

#[derive(Clone, Debug)]
pub struct TopKHeap {
    capacity: usize,
    heap: Vec<Entry>,
    slots: HashMap<FeatureId, usize>,
}

impl TopKHeap {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity,
            heap: Vec::with_capacity(capacity),
            slots: HashMap::with_capacity(capacity),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    pub fn contains(&self, id: FeatureId) -> bool {
        self.slots.contains_key(&id)
    }

    pub fn weight(&self, id: FeatureId) -> Option<f64> {
        self.slots.get(&id).map(|&s| self.heap[s].weight)
    }

    /// The weakest retained entry.
    pub fn min(&self) -> Option<(FeatureId, f64)> {
        self.heap.first().map(|e| (e.id, e.weight))
    }

    /// Inserts or updates `id`. A new feature entering a full heap replaces
    /// the weakest entry only if it is strictly stronger.
    pub fn offer(&mut self, id: FeatureId, weight: f64) {
        debug_assert!(weight.is_finite());
        let entry = Entry { id, weight };
        if let Some(&slot) = self.slots.get(&id) {
            self.heap[slot].weight = weight;
            let slot = self.sift_up(slot);
            self.sift_down(slot);
            return;
        }
        if self.heap.len() < self.capacity {
            self.heap.push(entry);
            let slot = self.heap.len() - 1;
            self.slots.insert(id, slot);
            self.sift_up(slot);
        } else if self.capacity > 0 && self.heap[0].weaker_than(&entry) {
            self.slots.remove(&self.heap[0].id);
            self.heap[0] = entry;
            self.slots.insert(id, 0);
            self.sift_down(0);
        }
    }

    pub fn members(&self) -> FeatureSet {
        self.heap.iter().map(|e| e.id).collect()
    }

    /// Entries by descending `|weight|`, ties by ascending id.
    pub fn snapshot(&self) -> Vec<(FeatureId, f64)> {
        let mut out = self.heap.clone();
        out.sort_by(|a, b| b.strength_cmp(a));
        out.into_iter().map(|e| (e.id, e.weight)).collect()
    }

    /// `feature,weight` CSV rows in snapshot order, with a header line.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "feature,weight")?;
        for (id, weight) in self.snapshot() {
            writeln!(w, "{id},{weight}")?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(capacity: usize, r: R) -> Result<Self, String> {
        let mut heap = TopKHeap::new(capacity);
        for (n, line) in r.lines().enumerate() {
            let line = line.map_err(|e| e.to_string())?;
            if n == 0 || line.trim().is_empty() {
                continue;
            }
            let (id, w) = line
                .split_once(',')
                .ok_or_else(|| format!("heap csv line {}: missing comma", n + 1))?;
            let id: FeatureId = id.trim().parse().map_err(|e| format!("line {}: {e}", n + 1))?;
            let w: f64 = w.trim().parse().map_err(|e| format!("line {}: {e}", n + 1))?;
            heap.offer(id, w);
        }
        Ok(heap)
    }

    fn swap(&mut self, a: usize, b: usize) {
        self.heap.swap(a, b);
        self.slots.insert(self.heap[a].id, a);
        self.slots.insert(self.heap[b].id, b);
    }

    fn sift_up(&mut self, mut slot: usize) -> usize {
        while slot > 0 {
            let parent = (slot - 1) / 2;
            if self.heap[slot].weaker_than(&self.heap[parent]) {
                self.swap(slot, parent);
                slot = parent;
            } else {
                break;
            }
        }
        slot
    }

    fn sift_down(&mut self, mut slot: usize) {
        let n = self.heap.len();
        loop {
            let (l, r) = (2 * slot + 1, 2 * slot + 2);
            let mut weakest = slot;
            if l < n && self.heap[l].weaker_than(&self.heap[weakest]) {
                weakest = l;
            }
            if r < n && self.heap[r].weaker_than(&self.heap[weakest]) {
                weakest = r;
            }
            if weakest == slot {
                break;
            }
            self.swap(slot, weakest);
            slot = weakest;
        }
    }
}
