//! Sparse vectors keyed by unbounded feature ids.
//!
//! Every gradient, search direction, curvature pair and restricted weight
//! vector in the optimizers is a [`SparseVec`]. Entries are kept sorted by
//! feature id with no duplicates; arithmetic drops exact zeros so that `nnz`
//! reflects the memory actually held.

use std::fmt;

use crate::error::VecError;

pub type FeatureId = u64;

#[derive(Clone, Default, PartialEq)]
pub struct SparseVec {
    entries: Vec<(FeatureId, f64)>,
}

impl fmt::Debug for SparseVec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_map().entries(self.entries.iter().map(|(i, v)| (i, v))).finish()
    }
}

impl SparseVec {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_capacity(cap: usize) -> Self {
        Self {
            entries: Vec::with_capacity(cap),
        }
    }

    /// Builds a vector from entries that must already be strictly increasing
    /// by id and finite. Zero values are kept.
    pub fn from_sorted(entries: Vec<(FeatureId, f64)>) -> Result<Self, VecError> {
        for w in entries.windows(2) {
            if w[0].0 >= w[1].0 {
                return Err(VecError::Unsorted(w[1].0));
            }
        }
        if let Some(&(id, _)) = entries.iter().find(|(_, v)| !v.is_finite()) {
            return Err(VecError::NonFinite(id));
        }
        Ok(Self { entries })
    }

    /// Builds a vector from arbitrary pairs, summing repeated ids.
    pub fn from_pairs<I>(pairs: I) -> Result<Self, VecError>
    where
        I: IntoIterator<Item = (FeatureId, f64)>,
    {
        let mut entries: Vec<(FeatureId, f64)> = pairs.into_iter().collect();
        entries.sort_by_key(|&(id, _)| id);
        let mut out: Vec<(FeatureId, f64)> = Vec::with_capacity(entries.len());
        for (id, v) in entries {
            if !v.is_finite() {
                return Err(VecError::NonFinite(id));
            }
            match out.last_mut() {
                Some(last) if last.0 == id => last.1 += v,
                _ => out.push((id, v)),
            }
        }
        Ok(Self { entries: out })
    }

    /// Dense slice viewed as a sparse vector over ids `0..dense.len()`,
    /// zeros included.
    pub fn from_dense(dense: &[f64]) -> Self {
        Self {
            entries: dense.iter().enumerate().map(|(i, &v)| (i as FeatureId, v)).collect(),
        }
    }

    /// Pushes an entry whose id is larger than every stored id.
    pub(crate) fn push_unchecked(&mut self, id: FeatureId, v: f64) {
        debug_assert!(self.entries.last().is_none_or(|&(last, _)| last < id));
        self.entries.push((id, v));
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[(FeatureId, f64)] {
        &self.entries
    }

    pub fn iter(&self) -> impl Iterator<Item = (FeatureId, f64)> + '_ {
        self.entries.iter().copied()
    }

    pub fn ids(&self) -> impl Iterator<Item = FeatureId> + '_ {
        self.entries.iter().map(|&(id, _)| id)
    }

    pub fn get(&self, id: FeatureId) -> f64 {
        match self.entries.binary_search_by_key(&id, |&(i, _)| i) {
            Ok(pos) => self.entries[pos].1,
            Err(_) => 0.0,
        }
    }

    pub fn norm_sq(&self) -> f64 {
        self.entries.iter().map(|&(_, v)| v * v).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.entries.iter().all(|&(_, v)| v.is_finite())
    }

    pub fn scale(&self, alpha: f64) -> SparseVec {
        let mut out = SparseVec {
            entries: self.entries.iter().map(|&(i, v)| (i, alpha * v)).collect(),
        };
        out.canonicalize();
        out
    }

    /// Removes stored zeros.
    pub fn canonicalize(&mut self) {
        self.entries.retain(|&(_, v)| v != 0.0);
    }

    pub fn support(&self) -> FeatureSet {
        FeatureSet {
            ids: self.ids().collect(),
        }
    }

    pub fn to_dense(&self, dim: usize) -> Vec<f64> {
        let mut out = vec![0.0; dim];
        for &(i, v) in &self.entries {
            out[i as usize] = v;
        }
        out
    }

    pub fn into_entries(self) -> Vec<(FeatureId, f64)> {
        self.entries
    }
}

/// Inner product over the shared support.
pub fn dot(a: &SparseVec, b: &SparseVec) -> f64 {
    let (mut i, mut j) = (0, 0);
    let (a, b) = (&a.entries, &b.entries);
    let mut acc = 0.0;
    while i < a.len() && j < b.len() {
        match a[i].0.cmp(&b[j].0) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                acc += a[i].1 * b[j].1;
                i += 1;
                j += 1;
            }
        }
    }
    acc
}

/// `alpha * x + y` over the merged support, exact zeros dropped.
pub fn axpy(alpha: f64, x: &SparseVec, y: &SparseVec) -> SparseVec {
    let (xs, ys) = (&x.entries, &y.entries);
    if xs.len() == ys.len() && xs.iter().zip(ys).all(|(a, b)| a.0 == b.0) {
        let entries = xs
            .iter()
            .zip(ys)
            .map(|(a, b)| (a.0, alpha * a.1 + b.1))
            .filter(|e| e.1 != 0.0)
            .collect();
        return SparseVec { entries };
    }
    let mut out = Vec::with_capacity(xs.len() + ys.len());
    let (mut i, mut j) = (0, 0);
    while i < xs.len() || j < ys.len() {
        let (id, v) = if j == ys.len() || (i < xs.len() && xs[i].0 < ys[j].0) {
            let e = (xs[i].0, alpha * xs[i].1);
            i += 1;
            e
        } else if i == xs.len() || ys[j].0 < xs[i].0 {
            let e = ys[j];
            j += 1;
            e
        } else {
            let e = (xs[i].0, alpha * xs[i].1 + ys[j].1);
            i += 1;
            j += 1;
            e
        };
        if v != 0.0 {
            out.push((id, v));
        }
    }
    SparseVec { entries: out }
}

/// `a - b`.
pub fn sub(a: &SparseVec, b: &SparseVec) -> SparseVec {
    axpy(-1.0, b, a)
}

/// Entries of `v` whose id is in `keep`.
pub fn restrict(v: &SparseVec, keep: &FeatureSet) -> SparseVec {
    let mut out = SparseVec::with_capacity(v.nnz().min(keep.len()));
    let ids = &keep.ids;
    let mut j = 0;
    for &(id, val) in &v.entries {
        j += ids[j..].partition_point(|&k| k < id);
        if j == ids.len() {
            break;
        }
        if ids[j] == id {
            out.entries.push((id, val));
        }
    }
    out
}

/// A sorted set of feature ids.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct FeatureSet {
    ids: Vec<FeatureId>,
}

impl FeatureSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_ids<I: IntoIterator<Item = FeatureId>>(ids: I) -> Self {
        let mut ids: Vec<FeatureId> = ids.into_iter().collect();
        ids.sort_unstable();
        ids.dedup();
        Self { ids }
    }

    /// Union of the supports of `vecs`.
    pub fn union_of<'a, I: IntoIterator<Item = &'a SparseVec>>(vecs: I) -> Self {
        let mut ids: Vec<FeatureId> = Vec::new();
        let mut merged = Vec::new();
        for v in vecs {
            // Rows sharing one support, the common case, cost a linear scan.
            if v.ids().eq(ids.iter().copied()) {
                continue;
            }
            merged.clear();
            merged.reserve(ids.len() + v.nnz());
            let mut a = ids.iter().copied().peekable();
            let mut b = v.ids().peekable();
            loop {
                let next = match (a.peek(), b.peek()) {
                    (Some(&x), Some(&y)) if x < y => a.next(),
                    (Some(&x), Some(&y)) if y < x => b.next(),
                    (Some(_), Some(_)) => {
                        b.next();
                        a.next()
                    }
                    (Some(_), None) => a.next(),
                    (None, Some(_)) => b.next(),
                    (None, None) => break,
                };
                merged.extend(next);
            }
            std::mem::swap(&mut ids, &mut merged);
        }
        Self { ids }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn contains(&self, id: FeatureId) -> bool {
        self.ids.binary_search(&id).is_ok()
    }

    /// Position of `id` in the sorted id list.
    pub fn position(&self, id: FeatureId) -> Option<usize> {
        self.ids.binary_search(&id).ok()
    }

    pub fn ids(&self) -> &[FeatureId] {
        &self.ids
    }

    pub fn iter(&self) -> impl Iterator<Item = FeatureId> + '_ {
        self.ids.iter().copied()
    }

    pub fn intersect(&self, other: &FeatureSet) -> FeatureSet {
        let (small, large) = if self.len() <= other.len() {
            (self, other)
        } else {
            (other, self)
        };
        FeatureSet {
            ids: small.ids.iter().copied().filter(|&id| large.contains(id)).collect(),
        }
    }

    pub fn is_superset(&self, other: &FeatureSet) -> bool {
        other.ids.iter().all(|&id| self.contains(id))
    }
}

impl FromIterator<FeatureId> for FeatureSet {
    fn from_iter<T: IntoIterator<Item = FeatureId>>(iter: T) -> Self {
        Self::from_ids(iter)
    }
}
