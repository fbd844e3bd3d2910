//! Step II: cluster grids back to tile embeddings, column by column, with
//! nearest-member snapping, plus discretization and rendering.

use super::grid::ClusterGrid;
use crate::clustering::{assign_cluster, DbscanModel};
use crate::corpus::{AffordanceVector, LevelGrid, LevelImage, Patch, TileOrigin, TileSymbol, AFFORDANCE_DIM};
use crate::embedding::{CteModel, EmbeddedLevel, LATENT};
use crate::error::{CteError, Result};
use crate::io::fnv1a64;
use crate::neuralkit::{clip_grad_norm, optimizer_step, AdamConfig, AdamState, Container, Dense, Lstm, LstmState, Module, Param};
use crate::scalar::{sq_dist, Scalar};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::path::Path;

const CHECKPOINT_KIND: &str = "cte-translator";

/// Cluster of every tile, via the nearest core point (noise included).
pub fn discretize<T: Scalar>(level: &EmbeddedLevel<T>, model: &DbscanModel) -> Result<ClusterGrid> {
    let cells = level.tiles().map(|v| assign_cluster(model, &v.iter().map(|x| x.as_f64()).collect::<Vec<_>>())).collect::<Result<Vec<_>>>()?;
    ClusterGrid::new(model.k, level.rows, level.cols, cells)
}

/// One distinct embedding inside a cluster.
#[derive(Clone, Debug, PartialEq)]
pub struct Member<T> {
    pub vector: Vec<T>,
    pub sprite: Patch,
    pub symbol: Option<TileSymbol>,
    /// First training tile with this embedding.
    pub origin: TileOrigin,
    /// Training tiles sharing it.
    pub count: usize,
}

/// Training embeddings grouped by cluster, for snapping and rendering.
#[derive(Clone, Debug)]
pub struct ClusterMemberIndex<T> {
    pub k: usize,
    pub clusters: Vec<Vec<Member<T>>>,
    lookup: HashMap<u64, Vec<(usize, usize)>>,
}

/// A training level as the index sees it.
pub struct IndexedLevel<'a, T> {
    pub embedded: &'a EmbeddedLevel<T>,
    pub clusters: &'a ClusterGrid,
    pub image: &'a LevelImage,
    pub grid: Option<&'a LevelGrid>,
}

fn vector_key<T: Scalar>(v: &[T]) -> u64 {
    let bytes: Vec<u8> = v.iter().flat_map(|x| x.as_f64().to_bits().to_le_bytes()).collect();
    fnv1a64(&bytes)
}

impl<T: Scalar> ClusterMemberIndex<T> {
    /// Every tile of every level lands in its cluster once; identical
    /// embeddings within a cluster share one member.
    pub fn build(k: usize, levels: &[IndexedLevel<T>]) -> Result<Self> {
        Self::build_where(k, levels, |_| true)
    }

    /// As [`build`](Self::build), skipping tiles whose embedding fails `keep`
    /// (for instance DBSCAN noise points, which belong to no cluster).
    pub fn build_where(k: usize, levels: &[IndexedLevel<T>], keep: impl Fn(&[T]) -> bool) -> Result<Self> {
        let mut idx = Self { k, clusters: vec![Vec::new(); k], lookup: HashMap::new() };
        for l in levels {
            let e = l.embedded;
            if (e.rows, e.cols) != (l.clusters.rows(), l.clusters.cols()) || (e.rows, e.cols) != (l.image.tile_rows(), l.image.tile_cols()) {
                return Err(CteError::dim(format!("index level {}", e.level), format!("{}x{}", e.rows, e.cols), format!("{}x{}", l.clusters.rows(), l.clusters.cols())));
            }
            if l.clusters.k != k {
                return Err(CteError::dim("cluster count", k, l.clusters.k));
            }
            for r in 0..e.rows {
                for c in 0..e.cols {
                    let v = e.get(r, c);
                    if !keep(v) {
                        continue;
                    }
                    let cl = l.clusters.get(r, c);
                    let key = vector_key(v);
                    let bucket = idx.lookup.entry(key).or_default();
                    if let Some(&(_, m)) = bucket.iter().find(|&&(bc, m)| bc == cl && idx.clusters[bc][m].vector == v) {
                        idx.clusters[cl][m].count += 1;
                        continue;
                    }
                    bucket.push((cl, idx.clusters[cl].len()));
                    idx.clusters[cl].push(Member {
                        vector: v.to_vec(),
                        sprite: l.image.tile_patch(r, c)?,
                        symbol: l.grid.map(|g| g.get(r, c)),
                        origin: TileOrigin { level: e.level.clone(), row: r, col: c },
                        count: 1,
                    });
                }
            }
        }
        if let Some(empty) = idx.clusters.iter().position(|m| m.is_empty()) {
            return Err(CteError::Empty(format!("cluster {empty} has no member tiles")));
        }
        Ok(idx)
    }

    /// `(cluster, member)` holding exactly `v`.
    pub fn find_exact(&self, v: &[T]) -> Option<(usize, usize)> {
        self.lookup.get(&vector_key(v))?.iter().copied().find(|&(c, m)| self.clusters[c][m].vector == v)
    }

    /// Closest member of `cluster` to `v`; ties go to the earliest member.
    pub fn nearest_in(&self, cluster: usize, v: &[T]) -> Result<usize> {
        let members = self.clusters.get(cluster).ok_or_else(|| CteError::InvalidArgument(format!("cluster {cluster} not in index of {}", self.k)))?;
        let mut best = (0, f64::INFINITY);
        for (i, m) in members.iter().enumerate() {
            let d = sq_dist(&m.vector, v).as_f64();
            if d < best.1 {
                best = (i, d);
            }
        }
        Ok(best.0)
    }

    pub fn nearest(&self, v: &[T]) -> (usize, usize) {
        let mut best = ((0, 0), f64::INFINITY);
        for (c, members) in self.clusters.iter().enumerate() {
            for (i, m) in members.iter().enumerate() {
                let d = sq_dist(&m.vector, v).as_f64();
                if d < best.1 {
                    best = ((c, i), d);
                }
            }
        }
        best.0
    }

    pub fn member(&self, at: (usize, usize)) -> &Member<T> {
        &self.clusters[at.0][at.1]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TranslatorConfig {
    pub hidden: usize,
    pub epochs: usize,
    pub adam: AdamConfig,
    pub grad_clip: f64,
}

impl Default for TranslatorConfig {
    fn default() -> Self {
        Self { hidden: 128, epochs: 60, adam: AdamConfig { lr: 3e-3, ..Default::default() }, grad_clip: 5.0 }
    }
}

/// Column LSTM: input is the one-hot clusters of columns `c` and `c - 1`
/// with the embeddings of column `c - 1`; output is column `c`'s embeddings.
#[derive(Clone, Debug, PartialEq)]
pub struct Translator<T> {
    pub config: TranslatorConfig,
    pub rows: usize,
    pub k: usize,
    lstm: Lstm<T>,
    head: Dense<T>,
    pub trained: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TranslatorReport {
    pub loss: Vec<f64>,
    pub aborted: Option<String>,
}

impl<T: Scalar> Translator<T> {
    pub fn new(config: TranslatorConfig, rows: usize, k: usize, seed: u64) -> Result<Self> {
        if rows == 0 || k == 0 || config.hidden == 0 {
            return Err(CteError::InvalidArgument("translator needs rows, clusters and hidden units".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let input = rows * (2 * k + LATENT);
        let lstm = Lstm::new("translator.lstm", input, config.hidden, &mut rng);
        let head = Dense::new("translator.head", config.hidden, rows * LATENT, &mut rng);
        Ok(Self { config, rows, k, lstm, head, trained: false })
    }

    fn input_dim(&self) -> usize {
        self.rows * (2 * self.k + LATENT)
    }

    /// Writes one column's input for batch row `b`.
    fn write_input(&self, grid: &ClusterGrid, col: usize, prev: Option<&[T]>, out: &mut [T]) {
        let (rows, k) = (self.rows, self.k);
        for r in 0..rows {
            out[r * k + grid.get(r, col)] = T::one();
            if col > 0 {
                out[rows * k + r * k + grid.get(r, col - 1)] = T::one();
            }
        }
        if let Some(p) = prev {
            out[2 * rows * k..].copy_from_slice(p);
        }
    }

    fn check_grid(&self, grid: &ClusterGrid) -> Result<()> {
        if grid.rows() != self.rows || grid.k != self.k || grid.cols() == 0 {
            return Err(CteError::dim("translator grid", format!("{} rows, K={}, >=1 column", self.rows, self.k), format!("{} rows, K={}, {} columns", grid.rows(), grid.k, grid.cols())));
        }
        Ok(())
    }

    pub fn to_container(&self, seed: u64) -> Container {
        let meta = serde_json::json!({ "config": self.config, "rows": self.rows, "k": self.k, "trained": self.trained });
        let mut c = Container::new(CHECKPOINT_KIND, seed, meta);
        c.push_module(self);
        c
    }

    pub fn from_container(c: &Container) -> Result<Self> {
        if c.kind != CHECKPOINT_KIND {
            return Err(CteError::Checkpoint(format!("expected {CHECKPOINT_KIND}, found {}", c.kind)));
        }
        let config: TranslatorConfig = serde_json::from_value(c.meta["config"].clone())?;
        let get = |k: &str| c.meta[k].as_u64().map(|v| v as usize).ok_or_else(|| CteError::Checkpoint(format!("missing {k}")));
        let mut t = Self::new(config, get("rows")?, get("k")?, 0)?;
        c.load_module(&mut t)?;
        t.trained = c.meta["trained"].as_bool().unwrap_or(false);
        Ok(t)
    }

    pub fn save(&self, path: &Path, seed: u64) -> Result<()> {
        self.to_container(seed).save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_container(&Container::load(path)?)
    }
}

impl<T: Scalar> Module<T> for Translator<T> {
    fn params(&self) -> Vec<&Param<T>> {
        let mut v = self.lstm.params();
        v.extend(self.head.params());
        v
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        let mut v = self.lstm.params_mut();
        v.extend(self.head.params_mut());
        v
    }
}

fn column_of<T: Scalar>(e: &EmbeddedLevel<T>, col: usize) -> Vec<T> {
    (0..e.rows).flat_map(|r| e.get(r, col).iter().copied()).collect()
}

/// Full-batch teacher-forced training over all level pairs, MSE on the
/// predicted columns.
pub fn train_translator<T: Scalar>(pairs: &[(ClusterGrid, EmbeddedLevel<T>)], config: &TranslatorConfig, seed: u64) -> Result<(Translator<T>, TranslatorReport)> {
    let first = pairs.first().ok_or_else(|| CteError::Empty("translator needs training pairs".into()))?;
    let (rows, k) = (first.0.rows(), first.0.k);
    for (g, e) in pairs {
        if (g.rows(), g.cols()) != (e.rows, e.cols) || g.rows() != rows || g.k != k || g.cols() == 0 {
            return Err(CteError::dim(format!("translator pair {}", e.level), format!("{rows} rows, K={k}, matching embedding"), format!("{}x{} K={} vs {}x{}", g.rows(), g.cols(), g.k, e.rows, e.cols)));
        }
    }
    let mut model = Translator::new(config.clone(), rows, k, seed)?;
    let b = pairs.len();
    let steps = pairs.iter().map(|p| p.0.cols()).max().unwrap_or(0);
    let (id, od) = (model.input_dim(), rows * LATENT);
    let mut xs = Vec::with_capacity(steps);
    let mut ys = Vec::with_capacity(steps);
    let mut mask = Vec::with_capacity(steps);
    for c in 0..steps {
        let mut x = vec![T::zero(); b * id];
        let mut y = vec![T::zero(); b * od];
        let mut m = vec![false; b];
        for (i, (g, e)) in pairs.iter().enumerate() {
            if c < g.cols() {
                let prev = (c > 0).then(|| column_of(e, c - 1));
                model.write_input(g, c, prev.as_deref(), &mut x[i * id..(i + 1) * id]);
                y[i * od..(i + 1) * od].copy_from_slice(&column_of(e, c));
                m[i] = true;
            }
        }
        xs.push(x);
        ys.push(y);
        mask.push(m);
    }
    let norm = mask.iter().flatten().filter(|&&m| m).count() as f64 * od as f64;
    let mut state = AdamState::<T>::new();
    let mut report = TranslatorReport { loss: Vec::new(), aborted: None };
    let mut best: Option<(f64, Vec<T>)> = None;
    for epoch in 1..=config.epochs {
        let (hs, caches, _) = model.lstm.forward_seq(&xs, LstmState::zeros(b, config.hidden), b)?;
        let mut loss = 0.0;
        let mut d_out = Vec::with_capacity(steps);
        for ((h, y), m) in hs.iter().zip(&ys).zip(&mask) {
            let out = model.head.forward(h, b)?;
            let mut g = vec![T::zero(); b * od];
            for i in (0..b).filter(|&i| m[i]) {
                for j in i * od..(i + 1) * od {
                    let e = out[j] - y[j];
                    loss += (e * e).as_f64();
                    g[j] = e * T::lit(2.0 / norm);
                }
            }
            d_out.push(g);
        }
        loss /= norm;
        if !loss.is_finite() {
            report.aborted = Some(format!("epoch {epoch}: loss is {loss}"));
            break;
        }
        if best.as_ref().is_none_or(|b| loss < b.0) {
            best = Some((loss, model.flat_values()));
        }
        report.loss.push(loss);
        model.zero_grad();
        let dh: Vec<Vec<T>> = hs.iter().zip(&d_out).map(|(h, g)| model.head.backward(h, g, b)).collect();
        model.lstm.backward_seq(&caches, &dh, b);
        clip_grad_norm(&mut model.params_mut(), config.grad_clip);
        optimizer_step(&mut model.params_mut(), &mut state, &config.adam)?;
        if epoch % 10 == 0 {
            log::info!("translator epoch {epoch}: mse {loss:.6}");
        }
    }
    if let Some((_, w)) = best {
        model.set_flat_values(&w)?;
    }
    model.zero_grad();
    model.trained = true;
    Ok((model, report))
}

/// Raw predictions and snapped embeddings for a cluster grid.
pub fn translate_level<T: Scalar>(translator: &Translator<T>, grid: &ClusterGrid, index: &ClusterMemberIndex<T>) -> Result<EmbeddedLevel<T>> {
    Ok(translate_level_raw(translator, grid, index)?.1)
}

/// As [`translate_level`], also returning the unsnapped predictions.
pub fn translate_level_raw<T: Scalar>(translator: &Translator<T>, grid: &ClusterGrid, index: &ClusterMemberIndex<T>) -> Result<(Vec<T>, EmbeddedLevel<T>)> {
    translator.check_grid(grid)?;
    if index.k != grid.k {
        return Err(CteError::dim("member index clusters", grid.k, index.k));
    }
    if let Some(missing) = grid.cells().iter().find(|&&c| index.clusters.get(c).is_none_or(|m| m.is_empty())) {
        return Err(CteError::InvalidArgument(format!("cluster {missing} has no members in the index")));
    }
    let (rows, cols) = (grid.rows(), grid.cols());
    let mut state = LstmState::zeros(1, translator.config.hidden);
    let mut snapped = vec![T::zero(); rows * cols * LATENT];
    let mut raw = snapped.clone();
    let mut prev: Option<Vec<T>> = None;
    for c in 0..cols {
        let mut x = vec![T::zero(); translator.input_dim()];
        translator.write_input(grid, c, prev.as_deref(), &mut x);
        let (next, _) = translator.lstm.step(&x, &state, 1)?;
        let out = translator.head.forward(&next.h, 1)?;
        state = next;
        let mut column = Vec::with_capacity(rows * LATENT);
        for r in 0..rows {
            let v = &out[r * LATENT..(r + 1) * LATENT];
            let cl = grid.get(r, c);
            let m = index.nearest_in(cl, v)?;
            let chosen = &index.clusters[cl][m].vector;
            let at = (r * cols + c) * LATENT;
            raw[at..at + LATENT].copy_from_slice(v);
            snapped[at..at + LATENT].copy_from_slice(chosen);
            column.extend_from_slice(chosen);
        }
        prev = Some(column);
    }
    let level = EmbeddedLevel { rows, cols, data: snapped, game: String::new(), level: "translated".into(), model_version: "snapped".into() };
    Ok((raw, level))
}

/// Drawn image, symbols when every member has one, and decoded affordances.
#[derive(Clone, Debug, PartialEq)]
pub struct RenderedLevel {
    pub image: LevelImage,
    pub symbols: Option<LevelGrid>,
    /// Decoder affordance head at 0.5, row-major; empty without a model.
    pub affordances: Vec<AffordanceVector>,
}

/// Draws each tile with the sprite of the member whose embedding it is.
/// Embeddings absent from the index fall back to the nearest member.
pub fn render_level<T: Scalar>(embedded: &EmbeddedLevel<T>, index: &ClusterMemberIndex<T>, decoder: Option<&CteModel<T>>) -> Result<RenderedLevel> {
    let (rows, cols) = (embedded.rows, embedded.cols);
    let mut members = Vec::with_capacity(rows * cols);
    let mut fallbacks = 0;
    for v in embedded.tiles() {
        let at = index.find_exact(v).unwrap_or_else(|| {
            fallbacks += 1;
            index.nearest(v)
        });
        members.push(index.member(at));
    }
    if fallbacks > 0 {
        log::warn!("{fallbacks} embeddings of {} were not in the index; used nearest members", embedded.level);
    }
    let image = LevelImage::from_tiles(rows, cols, |r, c| &members[r * cols + c].sprite)?;
    let symbols = members.iter().map(|m| m.symbol).collect::<Option<Vec<_>>>().map(|s| LevelGrid::new(rows, cols, s)).transpose()?;
    let affordances = match decoder {
        Some(m) => m
            .affordance_from_latent(&embedded.data, rows * cols)?
            .chunks(AFFORDANCE_DIM)
            .map(|p| {
                let mut a = [0u8; AFFORDANCE_DIM];
                for (o, v) in a.iter_mut().zip(p) {
                    *o = u8::from(v.as_f64() >= 0.5);
                }
                a
            })
            .collect(),
        None => Vec::new(),
    };
    Ok(RenderedLevel { image, symbols, affordances })
}
