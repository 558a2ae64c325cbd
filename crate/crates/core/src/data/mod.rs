//! Datasets: VW-style text ingestion and the synthetic sparse-recovery task.

mod synthetic;
mod vw;

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use synthetic::{gen_synthetic, SyntheticData, SyntheticSpec};
pub use vw::{format_vw, parse_vw, read_vw, read_vw_file, DEFAULT_INGEST_SEED};

use crate::loss::Example;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Task {
    Regression,
    Binary,
    Multiclass(usize),
}

impl Task {
    /// Number of weight vectors a model for this task carries.
    pub fn num_models(&self) -> usize {
        match self {
            Task::Multiclass(c) => *c,
            _ => 1,
        }
    }

    pub fn validate_label(&self, y: f64) -> bool {
        match self {
            Task::Regression => y.is_finite(),
            Task::Binary => y == 0.0 || y == 1.0,
            Task::Multiclass(c) => y >= 0.0 && y.fract() == 0.0 && (y as usize) < *c,
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Task::Regression => write!(f, "regression"),
            Task::Binary => write!(f, "binary"),
            Task::Multiclass(c) => write!(f, "multiclass:{c}"),
        }
    }
}

impl FromStr for Task {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "regression" => Ok(Task::Regression),
            "binary" => Ok(Task::Binary),
            _ => {
                let c = s
                    .strip_prefix("multiclass:")
                    .ok_or_else(|| format!("unknown task '{s}'"))?;
                let c: usize = c.parse().map_err(|_| format!("bad class count in '{s}'"))?;
                if c < 2 {
                    return Err("multiclass needs at least 2 classes".into());
                }
                Ok(Task::Multiclass(c))
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetStats {
    /// Number of distinct feature ids seen.
    pub p_observed: usize,
    pub n: usize,
    pub avg_active: f64,
    /// Largest feature id plus one.
    pub dim: u64,
}

impl DatasetStats {
    /// `name,p_observed,n,avg_active`
    pub fn csv_row(&self, name: &str) -> String {
        format!("{name},{},{},{:.2}", self.p_observed, self.n, self.avg_active)
    }
}

#[derive(Clone, Debug)]
pub struct Dataset {
    pub task: Task,
    pub examples: Vec<Example>,
}

impl Dataset {
    pub fn new(task: Task, examples: Vec<Example>) -> Self {
        Self { task, examples }
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn stats(&self) -> DatasetStats {
        let mut seen = HashSet::new();
        let mut nnz = 0usize;
        let mut dim = 0u64;
        for e in &self.examples {
            nnz += e.x.nnz();
            for id in e.x.ids() {
                seen.insert(id);
                dim = dim.max(id + 1);
            }
        }
        DatasetStats {
            p_observed: seen.len(),
            n: self.examples.len(),
            avg_active: if self.examples.is_empty() {
                0.0
            } else {
                nnz as f64 / self.examples.len() as f64
            },
            dim,
        }
    }

    /// Splits off the trailing `fraction` of examples as a test set.
    pub fn split_tail(mut self, fraction: f64) -> (Dataset, Dataset) {
        let n_test = ((self.examples.len() as f64) * fraction).round() as usize;
        let test = self.examples.split_off(self.examples.len() - n_test.min(self.examples.len()));
        (
            Dataset::new(self.task, self.examples),
            Dataset::new(self.task, test),
        )
    }
}
