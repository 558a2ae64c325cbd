//! Checkpoint directories.
//!
//! `meta.json` holds the trainer config and step counter. Sketched trainers
//! write, per class `c`, `sketch_c.bin` (table serialization), `heap_c.csv`
//! (heap snapshot) and `history_c.bin` (curvature pairs). Dense trainers write
//! `weights_c.bin` (little-endian `f64`) and `history_c.bin`.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Model, TrainerConfig, TrainerState};
use crate::error::TrainError;
use crate::lbfgs::CurvatureHistory;
use crate::sketch::CountSketch;
use crate::topk::TopKHeap;

#[derive(Serialize, Deserialize)]
struct Meta {
    version: u32,
    t: u64,
    config: TrainerConfig,
}

fn bad(msg: impl Into<String>) -> TrainError {
    TrainError::Checkpoint(msg.into())
}

impl TrainerState {
    pub fn save_checkpoint(&self, dir: &Path) -> Result<(), TrainError> {
        fs::create_dir_all(dir)?;
        let meta = Meta {
            version: 1,
            t: self.t,
            config: self.config.clone(),
        };
        let json = serde_json::to_string_pretty(&meta).map_err(|e| bad(e.to_string()))?;
        fs::write(dir.join("meta.json"), json)?;
        match &self.model {
            Model::Sketched(cs) => {
                for (c, class) in cs.iter().enumerate() {
                    class
                        .sketch
                        .write_to(BufWriter::new(File::create(dir.join(format!("sketch_{c}.bin")))?))?;
                    class
                        .heap
                        .write_csv(BufWriter::new(File::create(dir.join(format!("heap_{c}.csv")))?))?;
                    class
                        .history
                        .write_to(BufWriter::new(File::create(dir.join(format!("history_{c}.bin")))?))?;
                }
            }
            Model::Dense(cs) | Model::Hashed { classes: cs, .. } => {
                for (c, class) in cs.iter().enumerate() {
                    let mut w = BufWriter::new(File::create(dir.join(format!("weights_{c}.bin")))?);
                    for x in &class.weights {
                        w.write_all(&x.to_le_bytes())?;
                    }
                    w.flush()?;
                    class
                        .history
                        .write_to(BufWriter::new(File::create(dir.join(format!("history_{c}.bin")))?))?;
                }
            }
        }
        Ok(())
    }

    pub fn load_checkpoint(dir: &Path) -> Result<Self, TrainError> {
        let meta: Meta = serde_json::from_str(&fs::read_to_string(dir.join("meta.json"))?)
            .map_err(|e| bad(e.to_string()))?;
        if meta.version != 1 {
            return Err(bad(format!("unsupported checkpoint version {}", meta.version)));
        }
        let mut state = TrainerState::new(meta.config)?;
        state.t = meta.t;
        let read_history = |c: usize| -> Result<CurvatureHistory, TrainError> {
            CurvatureHistory::read_from(BufReader::new(File::open(dir.join(format!("history_{c}.bin")))?))
                .map_err(bad)
        };
        match &mut state.model {
            Model::Sketched(cs) => {
                for (c, class) in cs.iter_mut().enumerate() {
                    let sketch = CountSketch::read_from(BufReader::new(File::open(
                        dir.join(format!("sketch_{c}.bin")),
                    )?))?;
                    if sketch.rows() != class.sketch.rows()
                        || sketch.width() != class.sketch.width()
                        || sketch.seed() != class.sketch.seed()
                    {
                        return Err(bad(format!("sketch_{c}.bin does not match the config")));
                    }
                    class.sketch = sketch;
                    class.heap = TopKHeap::read_csv(
                        class.heap.capacity(),
                        BufReader::new(File::open(dir.join(format!("heap_{c}.csv")))?),
                    )
                    .map_err(bad)?;
                    class.history = read_history(c)?;
                }
            }
            Model::Dense(cs) | Model::Hashed { classes: cs, .. } => {
                for (c, class) in cs.iter_mut().enumerate() {
                    let mut bytes = Vec::new();
                    File::open(dir.join(format!("weights_{c}.bin")))?.read_to_end(&mut bytes)?;
                    if bytes.len() != class.weights.len() * 8 {
                        return Err(bad(format!("weights_{c}.bin has the wrong length")));
                    }
                    for (w, chunk) in class.weights.iter_mut().zip(bytes.chunks_exact(8)) {
                        *w = f64::from_le_bytes(chunk.try_into().expect("8 bytes"));
                    }
                    class.history = read_history(c)?;
                }
            }
        }
        Ok(state)
    }
}
