//! Count Sketch over real-valued weights.
//!
//! A `rows x width` grid of `f64` accumulators. Row `j` maps feature `i` to
//! bucket `h_j(i)` with sign `s_j(i)`; `add(i, delta)` adds `s_j(i) * delta`
//! to every row's bucket and `query(i)` returns the median of the signed
//! per-row estimates. Hash functions are 32-bit MurmurHash3 keyed by seeds
//! derived from one 64-bit table seed, so a table is reproducible from
//! `(rows, width, seed)` alone.

use std::io::{Read, Write};

use crate::error::SketchError;
use crate::hash::{derive_seed, hash_feature, sign_of, Purpose};
use crate::svec::{FeatureId, SparseVec};

const MAGIC: &[u8; 4] = b"CSKT";
const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct CountSketch {
    rows: usize,
    width: usize,
    seed: u64,
    index_seeds: Vec<u32>,
    sign_seeds: Vec<u32>,
    counters: Vec<f64>,
}

/// Prior values of the cells touched by a logged update.
#[derive(Debug, Default)]
pub struct SketchUndo {
    cells: Vec<(usize, f64)>,
}

impl SketchUndo {
    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }
}

impl CountSketch {
    pub fn new(rows: usize, width: usize, seed: u64) -> Result<Self, SketchError> {
        if rows == 0 || width == 0 {
            return Err(SketchError::Shape { rows, width });
        }
        let index_seeds = (0..rows)
            .map(|r| derive_seed(seed, r as u32, Purpose::Index))
            .collect();
        let sign_seeds = (0..rows)
            .map(|r| derive_seed(seed, r as u32, Purpose::Sign))
            .collect();
        Ok(Self {
            rows,
            width,
            seed,
            index_seeds,
            sign_seeds,
            counters: vec![0.0; rows * width],
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Total number of cells, `rows * width`.
    pub fn size(&self) -> usize {
        self.counters.len()
    }

    pub fn counters(&self) -> &[f64] {
        &self.counters
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.counters[row * self.width..(row + 1) * self.width]
    }

    /// Bucket of `feature` in `row`. Panics if `row >= rows`.
    #[inline]
    pub fn hash_index(&self, row: usize, feature: FeatureId) -> usize {
        (hash_feature(feature, self.index_seeds[row]) % self.width as u32) as usize
    }

    /// Sign (`+1.0` or `-1.0`) of `feature` in `row`. Panics if `row >= rows`.
    #[inline]
    pub fn hash_sign(&self, row: usize, feature: FeatureId) -> f64 {
        sign_of(hash_feature(feature, self.sign_seeds[row]))
    }

    #[inline]
    fn cell(&self, row: usize, feature: FeatureId) -> usize {
        row * self.width + self.hash_index(row, feature)
    }

    pub fn add(&mut self, feature: FeatureId, delta: f64) -> Result<(), SketchError> {
        if !delta.is_finite() {
            return Err(SketchError::NonFinite { feature, delta });
        }
        self.add_unchecked(feature, delta);
        Ok(())
    }

    fn add_unchecked(&mut self, feature: FeatureId, delta: f64) {
        for row in 0..self.rows {
            let cell = self.cell(row, feature);
            self.counters[cell] += self.hash_sign(row, feature) * delta;
        }
    }

    /// Adds every entry of `v`. Nothing is written unless all values are finite.
    pub fn add_sparse(&mut self, v: &SparseVec) -> Result<(), SketchError> {
        check_finite(v)?;
        for (feature, delta) in v.iter() {
            self.add_unchecked(feature, delta);
        }
        Ok(())
    }

    /// Like [`add_sparse`](Self::add_sparse), recording the previous value of
    /// each touched cell so the update can be rolled back bit-exactly.
    pub fn add_sparse_logged(&mut self, v: &SparseVec) -> Result<SketchUndo, SketchError> {
        check_finite(v)?;
        let mut undo = SketchUndo {
            cells: Vec::with_capacity(v.nnz() * self.rows),
        };
        for (feature, delta) in v.iter() {
            for row in 0..self.rows {
                let cell = self.cell(row, feature);
                undo.cells.push((cell, self.counters[cell]));
                self.counters[cell] += self.hash_sign(row, feature) * delta;
            }
        }
        Ok(undo)
    }

    pub fn undo(&mut self, undo: SketchUndo) {
        for &(cell, old) in undo.cells.iter().rev() {
            self.counters[cell] = old;
        }
    }

    /// Signed single-row estimate `s_j(i) * S[j, h_j(i)]`.
    #[inline]
    pub fn row_estimate(&self, row: usize, feature: FeatureId) -> f64 {
        self.hash_sign(row, feature) * self.counters[self.cell(row, feature)]
    }

    /// Median of the per-row estimates; the mean of the two central values
    /// when `rows` is even.
    pub fn query(&self, feature: FeatureId) -> f64 {
        const STACK: usize = 16;
        if self.rows <= STACK {
            let mut buf = [0.0f64; STACK];
            for (row, slot) in buf.iter_mut().enumerate().take(self.rows) {
                *slot = self.row_estimate(row, feature);
            }
            median(&mut buf[..self.rows])
        } else {
            let mut buf: Vec<f64> = (0..self.rows).map(|r| self.row_estimate(r, feature)).collect();
            median(&mut buf)
        }
    }

    pub fn clear(&mut self) {
        self.counters.iter_mut().for_each(|c| *c = 0.0);
    }

    /// Header `{magic "CSKT", version u32, rows u64, width u64, seed u64}`
    /// followed by `rows * width` little-endian `f64`, row-major.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<(), SketchError> {
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(self.rows as u64).to_le_bytes())?;
        w.write_all(&(self.width as u64).to_le_bytes())?;
        w.write_all(&self.seed.to_le_bytes())?;
        for c in &self.counters {
            w.write_all(&c.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self, SketchError> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(SketchError::Format("bad magic".into()));
        }
        let mut b4 = [0u8; 4];
        r.read_exact(&mut b4)?;
        let version = u32::from_le_bytes(b4);
        if version != VERSION {
            return Err(SketchError::Format(format!("unsupported version {version}")));
        }
        let mut b8 = [0u8; 8];
        let mut next_u64 = |r: &mut R| -> Result<u64, SketchError> {
            r.read_exact(&mut b8)?;
            Ok(u64::from_le_bytes(b8))
        };
        let rows = next_u64(&mut r)? as usize;
        let width = next_u64(&mut r)? as usize;
        let seed = next_u64(&mut r)?;
        let mut table = CountSketch::new(rows, width, seed)?;
        for c in table.counters.iter_mut() {
            *c = f64::from_bits(next_u64(&mut r)?);
        }
        Ok(table)
    }
}

fn check_finite(v: &SparseVec) -> Result<(), SketchError> {
    match v.iter().find(|(_, d)| !d.is_finite()) {
        Some((feature, delta)) => Err(SketchError::NonFinite { feature, delta }),
        None => Ok(()),
    }
}

fn median(buf: &mut [f64]) -> f64 {
    buf.sort_unstable_by(f64::total_cmp);
    let n = buf.len();
    if n % 2 == 1 {
        buf[n / 2]
    } else {
        0.5 * (buf[n / 2 - 1] + buf[n / 2])
    }
}
