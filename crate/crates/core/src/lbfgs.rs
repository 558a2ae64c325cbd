//! Limited-memory BFGS over sparse vectors.
//!
//! [`CurvatureHistory`] keeps the last `tau` curvature pairs `(s, r)` and
//! [`direction`] applies the implied inverse-Hessian approximation to a
//! gradient with the two-loop recursion. No dense vector is ever formed, so the
//! result's support is bounded by the gradient support plus the stored `s`
//! supports.

use std::collections::VecDeque;
use std::io::{Read, Write};

use crate::svec::{axpy, dot, FeatureId, SparseVec};

/// Pairs with `r.s <= CURVATURE_FLOOR * |s|^2` are skipped.
pub const CURVATURE_FLOOR: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq)]
pub struct CurvaturePair {
    pub s: SparseVec,
    pub r: SparseVec,
    /// `1 / r.s`
    pub rho: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CurvatureHistory {
    capacity: usize,
    pairs: VecDeque<CurvaturePair>,
}

impl CurvatureHistory {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity,
            pairs: VecDeque::with_capacity(capacity),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Oldest first.
    pub fn pairs(&self) -> impl DoubleEndedIterator<Item = &CurvaturePair> + ExactSizeIterator {
        self.pairs.iter()
    }

    pub fn newest(&self) -> Option<&CurvaturePair> {
        self.pairs.back()
    }

    /// Number of stored sparse entries across all pairs.
    pub fn stored_entries(&self) -> usize {
        self.pairs.iter().map(|p| p.s.nnz() + p.r.nnz()).sum()
    }

    /// Stores `(s, r)` if it has positive curvature, evicting the oldest pair
    /// when full. Returns whether the pair was kept.
    pub fn push_pair(&mut self, s: SparseVec, r: SparseVec) -> bool {
        if self.capacity == 0 || !s.is_finite() || !r.is_finite() {
            return false;
        }
        let s_sq = s.norm_sq();
        let curvature = dot(&r, &s);
        if s_sq == 0.0 || curvature <= CURVATURE_FLOOR * s_sq {
            return false;
        }
        let rho = 1.0 / curvature;
        if !rho.is_finite() {
            return false;
        }
        if self.pairs.len() == self.capacity {
            self.pairs.pop_front();
        }
        self.pairs.push_back(CurvaturePair { s, r, rho });
        true
    }

    pub fn clear(&mut self) {
        self.pairs.clear();
    }

    /// Binary encoding: magic `CHST`, version `u32`, capacity `u64`, pair
    /// count `u64`, then per pair `rho` as `f64` followed by `s` and `r`, each
    /// as an entry count `u64` and `(id u64, value f64)` entries. Little-endian.
    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(b"CHST")?;
        w.write_all(&1u32.to_le_bytes())?;
        w.write_all(&(self.capacity as u64).to_le_bytes())?;
        w.write_all(&(self.pairs.len() as u64).to_le_bytes())?;
        for p in &self.pairs {
            w.write_all(&p.rho.to_le_bytes())?;
            write_svec(&mut w, &p.s)?;
            write_svec(&mut w, &p.r)?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self, String> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(|e| e.to_string())?;
        if &magic != b"CHST" {
            return Err("bad history magic".into());
        }
        let mut b4 = [0u8; 4];
        r.read_exact(&mut b4).map_err(|e| e.to_string())?;
        if u32::from_le_bytes(b4) != 1 {
            return Err("unsupported history version".into());
        }
        let capacity = read_u64(&mut r)? as usize;
        let count = read_u64(&mut r)? as usize;
        if count > capacity {
            return Err(format!("{count} pairs exceed capacity {capacity}"));
        }
        let mut pairs = VecDeque::with_capacity(capacity);
        for _ in 0..count {
            let rho = f64::from_bits(read_u64(&mut r)?);
            let s = read_svec(&mut r)?;
            let rv = read_svec(&mut r)?;
            pairs.push_back(CurvaturePair { s, r: rv, rho });
        }
        Ok(Self { capacity, pairs })
    }
}

fn write_svec<W: Write>(w: &mut W, v: &SparseVec) -> std::io::Result<()> {
    w.write_all(&(v.nnz() as u64).to_le_bytes())?;
    for (id, val) in v.iter() {
        w.write_all(&id.to_le_bytes())?;
        w.write_all(&val.to_le_bytes())?;
    }
    Ok(())
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64, String> {
    let mut b8 = [0u8; 8];
    r.read_exact(&mut b8).map_err(|e| e.to_string())?;
    Ok(u64::from_le_bytes(b8))
}

fn read_svec<R: Read>(r: &mut R) -> Result<SparseVec, String> {
    let n = read_u64(r)? as usize;
    let mut entries: Vec<(FeatureId, f64)> = Vec::with_capacity(n.min(1 << 20));
    for _ in 0..n {
        let id = read_u64(r)?;
        let v = f64::from_bits(read_u64(r)?);
        entries.push((id, v));
    }
    SparseVec::from_sorted(entries).map_err(|e| e.to_string())
}

/// Two-loop recursion: returns `H g` where `H` is the L-BFGS inverse-Hessian
/// approximation built from `history`, with initial scaling `r.s / r.r` of the
/// newest pair. An empty history returns `g` unchanged.
pub fn direction(g: &SparseVec, history: &CurvatureHistory) -> SparseVec {
    let Some(newest) = history.newest() else {
        return g.clone();
    };
    let mut alphas = Vec::with_capacity(history.len());
    let mut q = g.clone();
    for pair in history.pairs().rev() {
        let alpha = pair.rho * dot(&pair.s, &q);
        q = axpy(-alpha, &pair.r, &q);
        alphas.push(alpha);
    }
    let gamma = dot(&newest.r, &newest.s) / newest.r.norm_sq();
    let mut z = q.scale(gamma);
    for (pair, alpha) in history.pairs().zip(alphas.into_iter().rev()) {
        let beta = pair.rho * dot(&pair.r, &z);
        z = axpy(alpha - beta, &pair.s, &z);
    }
    z
}
