//! Vowpal-Wabbit-style lines: `label ['|' [namespace]] (feature[:value])*`.
//!
//! Integer feature names are used as ids directly; any other name is hashed
//! with 32-bit MurmurHash3 under an ingestion seed. Namespaces are accepted
//! and ignored. Repeated features within a line are summed.

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use super::{Dataset, Task};
use crate::error::DataError;
use crate::hash::{derive_seed, hash_bytes, Purpose};
use crate::loss::Example;
use crate::svec::{FeatureId, SparseVec};

pub const DEFAULT_INGEST_SEED: u64 = 0x5eed_1d5;

fn parse_label(tok: &str, task: Task) -> Result<f64, String> {
    let v: f64 = tok.parse().map_err(|_| format!("bad label '{tok}'"))?;
    let y = match task {
        Task::Binary if v == -1.0 => 0.0,
        Task::Binary if v == 1.0 || v == 0.0 => v,
        Task::Binary => return Err(format!("binary label must be -1, 0 or 1, got '{tok}'")),
        _ => v,
    };
    if !task.validate_label(y) {
        return Err(format!("label '{tok}' invalid for {task}"));
    }
    Ok(y)
}

fn feature_id(name: &str, ingest_seed: u64) -> FeatureId {
    match name.parse::<u64>() {
        Ok(id) => id,
        Err(_) => hash_bytes(name.as_bytes(), derive_seed(ingest_seed, 0, Purpose::Ingest)) as u64,
    }
}

/// Parses one line. `line_no` is only used in error messages.
pub fn parse_vw(line: &str, line_no: usize, task: Task, ingest_seed: u64) -> Result<Example, DataError> {
    let err = |msg: String| DataError::Parse { line: line_no, msg };
    let mut tokens = line.split_whitespace();
    let label = tokens.next().ok_or_else(|| err("empty line".into()))?;
    let y = parse_label(label, task).map_err(err)?;

    let mut pairs = Vec::new();
    for tok in tokens {
        if tok.starts_with('|') {
            continue;
        }
        let (name, value) = match tok.split_once(':') {
            Some((name, v)) => {
                let value: f64 = v
                    .parse()
                    .map_err(|_| err(format!("bad feature value in '{tok}'")))?;
                (name, value)
            }
            None => (tok, 1.0),
        };
        if name.is_empty() {
            return Err(err(format!("empty feature name in '{tok}'")));
        }
        if !value.is_finite() {
            return Err(err(format!("non-finite feature value in '{tok}'")));
        }
        pairs.push((feature_id(name, ingest_seed), value));
    }
    let x = SparseVec::from_pairs(pairs).map_err(|e| err(e.to_string()))?;
    Ok(Example::new(x, y))
}

/// Inverse of [`parse_vw`] for numeric ids: `label | id:value ...`.
pub fn format_vw(example: &Example) -> String {
    let mut s = format!("{} |", example.y);
    for (id, v) in example.x.iter() {
        s.push_str(&format!(" {id}:{v}"));
    }
    s
}

/// Reads every non-blank line of `reader`.
pub fn read_vw<R: BufRead>(reader: R, task: Task, ingest_seed: u64) -> Result<Dataset, DataError> {
    let mut examples = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        examples.push(parse_vw(&line, i + 1, task, ingest_seed)?);
    }
    Ok(Dataset::new(task, examples))
}

pub fn read_vw_file(path: &Path, task: Task, ingest_seed: u64) -> Result<Dataset, DataError> {
    let f = File::open(path)
        .map_err(|e| DataError::Invalid(format!("cannot open {}: {e}", path.display())))?;
    read_vw(BufReader::new(f), task, ingest_seed)
}
