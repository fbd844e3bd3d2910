//! Deduplicated autoencoder samples and their frozen GMM targets.

use super::model::{CteBatch, CONTEXT_LEN};
use crate::clustering::{select_k_elbow, GmmConfig, GmmModel, KScore, Standardizer, WeightedPoints};
use crate::corpus::image::{CONTEXT, TILE};
use crate::corpus::{build_tile_sample, AffordanceMap, LevelGrid, LevelImage, TileOrigin, TileSample, AFFORDANCE_DIM};
use crate::error::{CteError, Result};
use crate::features::EDGE_LEN;
use crate::io::fnv1a64;
use crate::scalar::Scalar;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

/// One level as seen by the autoencoder.
#[derive(Clone, Copy, Debug)]
pub struct LevelSource<'a> {
    pub game: &'a str,
    pub level: &'a str,
    pub image: &'a LevelImage,
    /// Symbol grid for the affordance lookup; image-only games pass `None`.
    pub grid: Option<&'a LevelGrid>,
    pub affordances: &'a AffordanceMap,
}

impl LevelSource<'_> {
    pub fn samples<T: Scalar>(&self) -> Result<Vec<TileSample<T>>> {
        let mut out = Vec::with_capacity(self.image.tile_rows() * self.image.tile_cols());
        for r in 0..self.image.tile_rows() {
            for c in 0..self.image.tile_cols() {
                out.push(build_tile_sample(self.image, self.grid, self.affordances, self.level, r, c)?);
            }
        }
        Ok(out)
    }
}

/// Unique samples stored as flat rows. `counts[i]` is how often sample `i`
/// occurred; `origins[i]` is its first occurrence.
#[derive(Clone, Debug, Default)]
pub struct CteDataset<T> {
    pub context: Vec<T>,
    pub affordance: Vec<T>,
    pub edges: Vec<T>,
    pub origins: Vec<TileOrigin>,
    pub counts: Vec<usize>,
    index: HashMap<u64, Vec<usize>>,
}

fn sample_key<T: Scalar>(ctx: &[T], aff: &[T], edges: &[T]) -> u64 {
    let bytes: Vec<u8> = ctx.iter().chain(aff).chain(edges).flat_map(|v| v.as_f64().to_bits().to_le_bytes()).collect();
    fnv1a64(&bytes)
}

impl<T: Scalar> CteDataset<T> {
    pub fn new() -> Self {
        Self { context: Vec::new(), affordance: Vec::new(), edges: Vec::new(), origins: Vec::new(), counts: Vec::new(), index: HashMap::new() }
    }

    pub fn len(&self) -> usize {
        self.origins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.origins.is_empty()
    }

    pub fn total_count(&self) -> usize {
        self.counts.iter().sum()
    }

    pub fn context_of(&self, i: usize) -> &[T] {
        &self.context[i * CONTEXT_LEN..(i + 1) * CONTEXT_LEN]
    }

    pub fn affordance_of(&self, i: usize) -> &[T] {
        &self.affordance[i * AFFORDANCE_DIM..(i + 1) * AFFORDANCE_DIM]
    }

    pub fn edges_of(&self, i: usize) -> &[T] {
        &self.edges[i * EDGE_LEN..(i + 1) * EDGE_LEN]
    }

    /// Adds a sample, or bumps the count of an identical one. Returns its index.
    pub fn push(&mut self, s: &TileSample<T>) -> Result<usize> {
        let ctx = s.context.data();
        if ctx.len() != CONTEXT_LEN {
            return Err(CteError::dim("sample context", CONTEXT_LEN, ctx.len()));
        }
        let aff = s.affordance_scalars();
        let edges: Vec<T> = s.edges.as_scalars();
        let key = sample_key(ctx, &aff, &edges);
        if let Some(bucket) = self.index.get(&key) {
            for &i in bucket {
                if self.context_of(i) == ctx && self.affordance_of(i) == &aff[..] && self.edges_of(i) == &edges[..] {
                    self.counts[i] += 1;
                    return Ok(i);
                }
            }
        }
        let i = self.len();
        self.context.extend_from_slice(ctx);
        self.affordance.extend_from_slice(&aff);
        self.edges.extend_from_slice(&edges);
        self.origins.push(s.origin.clone());
        self.counts.push(1);
        self.index.entry(key).or_default().push(i);
        Ok(i)
    }

    pub fn extend_from_level(&mut self, src: &LevelSource) -> Result<()> {
        for s in src.samples::<T>()? {
            self.push(&s)?;
        }
        Ok(())
    }

    pub fn from_levels(sources: &[LevelSource]) -> Result<Self> {
        let mut ds = Self::new();
        for s in sources {
            ds.extend_from_level(s)?;
        }
        Ok(ds)
    }

    /// Gathers rows `idx` into a batch; `targets` holds `k` values per sample.
    pub fn batch(&self, idx: &[usize], targets: Option<(&[T], usize)>) -> CteBatch<T> {
        let mut b = CteBatch { n: idx.len(), ..Default::default() };
        for &i in idx {
            b.context.extend_from_slice(self.context_of(i));
            b.affordance.extend_from_slice(self.affordance_of(i));
            b.edges.extend_from_slice(self.edges_of(i));
            if let Some((t, k)) = targets {
                b.target.extend_from_slice(&t[i * k..(i + 1) * k]);
            }
        }
        b
    }

    /// Clustering features of the centre tile: RGB pixels, affordances, edges.
    pub fn gmm_features(&self, i: usize) -> Vec<f64> {
        let ctx = self.context_of(i);
        let plane = CONTEXT * CONTEXT;
        let mut f = Vec::with_capacity(TILE * TILE * 3 + AFFORDANCE_DIM + EDGE_LEN);
        for y in TILE..2 * TILE {
            for x in TILE..2 * TILE {
                for c in 0..3 {
                    f.push(ctx[c * plane + y * CONTEXT + x].as_f64());
                }
            }
        }
        f.extend(self.affordance_of(i).iter().map(|v| v.as_f64()));
        f.extend(self.edges_of(i).iter().map(|v| v.as_f64()));
        f
    }
}

/// Frozen GMM over centre-tile features, used as cluster-loss targets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GmmTargets {
    pub standardizer: Standardizer,
    pub model: GmmModel,
    pub scores: Vec<KScore>,
    /// One-hot argmax targets unless set, then full responsibilities.
    pub soft: bool,
}

impl GmmTargets {
    /// Fits mixtures over `k_range` on the dataset's distinct centre tiles,
    /// weighted by occurrence, and keeps the BIC elbow.
    pub fn fit<T: Scalar>(ds: &CteDataset<T>, k_range: &[usize], seed: u64, cfg: &GmmConfig, soft: bool) -> Result<Self> {
        if ds.is_empty() {
            return Err(CteError::Empty("no samples for GMM targets".into()));
        }
        let mut groups: HashMap<Vec<u64>, usize> = HashMap::new();
        let mut data = Vec::new();
        let mut weights: Vec<f64> = Vec::new();
        let mut dim = 0;
        for i in 0..ds.len() {
            let f = ds.gmm_features(i);
            dim = f.len();
            let key: Vec<u64> = f.iter().map(|v| v.to_bits()).collect();
            match groups.get(&key) {
                Some(&g) => weights[g] += ds.counts[i] as f64,
                None => {
                    groups.insert(key, weights.len());
                    weights.push(ds.counts[i] as f64);
                    data.extend(f);
                }
            }
        }
        let points = WeightedPoints::weighted(dim, data, weights)?;
        let standardizer = Standardizer::fit(&points);
        let points = standardizer.transform(&points);
        let ks: Vec<usize> = k_range.iter().copied().filter(|&k| k >= 1 && k <= points.len()).collect();
        if ks.is_empty() {
            return Err(CteError::InvalidArgument(format!("no k in {k_range:?} fits {} distinct tiles", points.len())));
        }
        let sel = select_k_elbow(&points, &ks, seed, cfg)?;
        log::info!("gmm targets: {} distinct tiles, k = {}", points.len(), sel.chosen);
        Ok(Self { standardizer, model: sel.chosen_model().clone(), scores: sel.scores, soft })
    }

    pub fn k(&self) -> usize {
        self.model.k
    }

    fn responsibilities(&self, x: &[f64]) -> Vec<f64> {
        let lp = self.model.component_log_probs(&self.standardizer.apply(x));
        let m = lp.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = lp.iter().map(|v| (v - m).exp()).collect();
        let s: f64 = e.iter().sum();
        e.into_iter().map(|v| v / s).collect()
    }

    /// Hard cluster of every sample.
    pub fn labels<T: Scalar>(&self, ds: &CteDataset<T>) -> Vec<usize> {
        (0..ds.len()).map(|i| self.model.predict(&self.standardizer.apply(&ds.gmm_features(i)))).collect()
    }

    /// Flat `len x k` target rows for the cluster loss.
    pub fn targets<T: Scalar>(&self, ds: &CteDataset<T>) -> Vec<T> {
        let k = self.k();
        let mut out = vec![T::zero(); ds.len() * k];
        for i in 0..ds.len() {
            let f = ds.gmm_features(i);
            let row = &mut out[i * k..(i + 1) * k];
            if self.soft {
                for (o, r) in row.iter_mut().zip(self.responsibilities(&f)) {
                    *o = T::lit(r);
                }
            } else {
                row[self.model.predict(&self.standardizer.apply(&f))] = T::one();
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::synthetic::{fixture_game, FixtureKind};

    #[test]
    fn dedup_merges_identical_samples() {
        let g = fixture_game(FixtureKind::Dungeon);
        let aff = g.affordance_map();
        let (id, level) = &g.levels[0];
        let img = g.render(level).unwrap();
        let src = LevelSource { game: &g.name, level: id, image: &img, grid: Some(level), affordances: &aff };
        let ds = CteDataset::<f32>::from_levels(&[src, src]).unwrap();
        assert_eq!(ds.total_count(), 2 * level.len());
        assert!(ds.len() < level.len());
        assert!(ds.counts.iter().all(|&c| c >= 2));
        assert_eq!(ds.batch(&[0, 1], None).context.len(), 2 * CONTEXT_LEN);
    }

    #[test]
    fn gmm_targets_are_one_hot() {
        let g = fixture_game(FixtureKind::Dungeon);
        let aff = g.affordance_map();
        let imgs: Vec<_> = g.levels.iter().take(2).map(|(_, l)| g.render(l).unwrap()).collect();
        let srcs: Vec<LevelSource> = g.levels.iter().zip(&imgs).map(|((id, l), img)| LevelSource { game: &g.name, level: id, image: img, grid: Some(l), affordances: &aff }).collect();
        let ds = CteDataset::<f64>::from_levels(&srcs).unwrap();
        let t = GmmTargets::fit(&ds, &[2, 3, 4], 1, &GmmConfig::default(), false).unwrap();
        let k = t.k();
        let rows = t.targets::<f64>(&ds);
        let labels = t.labels(&ds);
        for (i, row) in rows.chunks(k).enumerate() {
            assert_eq!(row.iter().sum::<f64>(), 1.0);
            assert_eq!(row[labels[i]], 1.0);
        }
        let soft = GmmTargets { soft: true, ..t };
        for row in soft.targets::<f64>(&ds).chunks(k) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }
}
