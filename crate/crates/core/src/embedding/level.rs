//! Whole-level embeddings and their on-disk dumps.

use super::dataset::LevelSource;
use super::model::{CteBatch, CteModel, CONTEXT_LEN, LATENT};
use crate::corpus::AFFORDANCE_DIM;
use crate::error::{CteError, Result};
use crate::features::EDGE_LEN;
use crate::io::write_atomic;
use crate::neuralkit::{Container, NamedTensor};
use crate::scalar::Scalar;
use serde::{Deserialize, Serialize};
use std::path::Path;

const DUMP_KIND: &str = "cte-embeddings";

/// `rows x cols x 256` latents of one level, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddedLevel<T> {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<T>,
    pub game: String,
    pub level: String,
    pub model_version: String,
}

impl<T: Scalar> EmbeddedLevel<T> {
    pub fn get(&self, row: usize, col: usize) -> &[T] {
        let i = (row * self.cols + col) * LATENT;
        &self.data[i..i + LATENT]
    }

    pub fn tiles(&self) -> impl Iterator<Item = &[T]> {
        self.data.chunks_exact(LATENT)
    }
}

/// Encodes every tile of a level with a trained model.
pub fn embed_level<T: Scalar>(model: &CteModel<T>, src: &LevelSource) -> Result<EmbeddedLevel<T>> {
    if !model.trained {
        return Err(CteError::Model("embedding requires a trained model".into()));
    }
    let samples = src.samples::<T>()?;
    let mut data = Vec::with_capacity(samples.len() * LATENT);
    for chunk in samples.chunks(64) {
        let mut b = CteBatch { n: chunk.len(), ..Default::default() };
        for s in chunk {
            b.context.extend_from_slice(s.context.data());
            b.affordance.extend(s.affordance_scalars());
            if model.config.use_edges {
                b.edges.extend(s.edges.as_scalars::<T>());
            }
        }
        debug_assert_eq!(b.context.len(), chunk.len() * CONTEXT_LEN);
        debug_assert_eq!(b.affordance.len(), chunk.len() * AFFORDANCE_DIM);
        debug_assert!(b.edges.is_empty() || b.edges.len() == chunk.len() * EDGE_LEN);
        data.extend(model.encode(&b)?);
    }
    if let Some(v) = data.iter().find(|v| !v.is_finite()) {
        return Err(CteError::Numeric(format!("encoder produced {v} for level {}", src.level)));
    }
    Ok(EmbeddedLevel {
        rows: src.image.tile_rows(),
        cols: src.image.tile_cols(),
        data,
        game: src.game.to_string(),
        level: src.level.to_string(),
        model_version: model.version(),
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct DumpEntry {
    game: String,
    level: String,
    model_version: String,
}

/// Writes levels to a tensor container plus a CSV index mapping
/// `(game, level, row, col)` to a record offset.
pub fn save_embeddings<T: Scalar>(levels: &[EmbeddedLevel<T>], bin: &Path, index_csv: &Path) -> Result<()> {
    let entries: Vec<DumpEntry> = levels.iter().map(|l| DumpEntry { game: l.game.clone(), level: l.level.clone(), model_version: l.model_version.clone() }).collect();
    let mut c = Container::new(DUMP_KIND, 0, serde_json::json!({ "levels": entries, "latent": LATENT }));
    let mut csv = String::from("game,level,row,col,record\n");
    let mut record = 0usize;
    for (i, l) in levels.iter().enumerate() {
        c.push(NamedTensor::new(format!("level{i}"), vec![l.rows, l.cols, LATENT], &l.data));
        for r in 0..l.rows {
            for col in 0..l.cols {
                csv.push_str(&format!("{},{},{r},{col},{record}\n", l.game, l.level));
                record += 1;
            }
        }
    }
    c.save(bin)?;
    write_atomic(index_csv, csv.as_bytes())
}

pub fn load_embeddings<T: Scalar>(bin: &Path) -> Result<Vec<EmbeddedLevel<T>>> {
    let c = Container::load(bin)?;
    if c.kind != DUMP_KIND {
        return Err(CteError::Checkpoint(format!("expected {DUMP_KIND}, found {}", c.kind)));
    }
    let entries: Vec<DumpEntry> = serde_json::from_value(c.meta["levels"].clone())?;
    entries
        .into_iter()
        .enumerate()
        .map(|(i, e)| {
            let t = c.get(&format!("level{i}"))?;
            if t.shape.len() != 3 || t.shape[2] != LATENT {
                return Err(CteError::dim(format!("embedding dump level {i}"), format!("[r, c, {LATENT}]"), format!("{:?}", t.shape)));
            }
            Ok(EmbeddedLevel { rows: t.shape[0], cols: t.shape[1], data: t.to_scalars(), game: e.game, level: e.level, model_version: e.model_version })
        })
        .collect()
}
