//! Mini-batch Adam training with best-validation checkpoint selection.

use super::dataset::{CteDataset, GmmTargets};
use super::model::{CteConfig, CteModel, LossParts, LATENT};
use crate::error::{CteError, Result};
use crate::neuralkit::{optimizer_step, AdamConfig, AdamState, Module};
use crate::scalar::{sq_dist, Scalar};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { epochs: 30, batch_size: 32, adam: AdamConfig::default() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train: LossParts,
    pub validation: LossParts,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Validation loss of the untrained model.
    pub initial: LossParts,
    pub curve: Vec<EpochRecord>,
    /// Epoch of the kept weights; 0 means the initial weights.
    pub best_epoch: usize,
    pub best_validation: f64,
    /// Set when a non-finite loss stopped training early.
    pub aborted: Option<String>,
}

impl TrainReport {
    /// `epoch,split,total,image,affordance,edge,cluster` rows.
    pub fn curves_csv(&self) -> String {
        let mut s = String::from("epoch,split,total,image,affordance,edge,cluster\n");
        let mut row = |e: usize, split: &str, p: &LossParts| {
            s.push_str(&format!("{e},{split},{},{},{},{},{}\n", p.total, p.image, p.affordance, p.edge, p.cluster));
        };
        row(0, "validation", &self.initial);
        for r in &self.curve {
            row(r.epoch, "train", &r.train);
            row(r.epoch, "validation", &r.validation);
        }
        s
    }
}

fn targets_for<T: Scalar>(cfg: &CteConfig, gmm: &GmmTargets, ds: &CteDataset<T>) -> Result<Option<Vec<T>>> {
    if cfg.weights.cluster == 0.0 {
        return Ok(None);
    }
    if gmm.k() != cfg.clusters {
        return Err(CteError::dim("cluster head vs GMM components", gmm.k(), cfg.clusters));
    }
    Ok(Some(gmm.targets(ds)))
}

/// Count-weighted mean loss over a dataset.
pub fn dataset_loss<T: Scalar>(model: &CteModel<T>, ds: &CteDataset<T>, targets: Option<&[T]>, batch: usize) -> Result<LossParts> {
    let k = model.config.clusters;
    let mut acc = LossParts { total: 0.0, image: 0.0, affordance: 0.0, edge: 0.0, cluster: 0.0 };
    let idx: Vec<usize> = (0..ds.len()).collect();
    for chunk in idx.chunks(batch.max(1)) {
        let b = ds.batch(chunk, targets.map(|t| (t, k)));
        let out = model.forward(&b)?;
        let p = model.loss(&out, &b)?;
        let w = chunk.len() as f64 / ds.len() as f64;
        acc.total += w * p.total;
        acc.image += w * p.image;
        acc.affordance += w * p.affordance;
        acc.edge += w * p.edge;
        acc.cluster += w * p.cluster;
    }
    Ok(acc)
}

/// Trains a fresh model on `train`, keeping the weights with the lowest
/// validation loss. A non-finite loss stops training and returns the last
/// stable weights with `aborted` set.
pub fn train_cte<T: Scalar>(
    train: &CteDataset<T>,
    validation: &CteDataset<T>,
    gmm: &GmmTargets,
    config: &CteConfig,
    tc: &TrainConfig,
    seed: u64,
) -> Result<(CteModel<T>, TrainReport)> {
    if train.is_empty() || validation.is_empty() {
        return Err(CteError::Empty("training needs non-empty train and validation sets".into()));
    }
    let mut model = CteModel::<T>::new(config.clone(), seed)?;
    let t_train = targets_for(config, gmm, train)?;
    let t_val = targets_for(config, gmm, validation)?;
    let k = config.clusters;
    let initial = dataset_loss(&model, validation, t_val.as_deref(), tc.batch_size)?;
    let mut best = (0usize, initial.total, model.flat_values());
    let mut state = AdamState::<T>::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut curve = Vec::new();
    let mut aborted = None;
    'epochs: for epoch in 1..=tc.epochs {
        order.shuffle(&mut rng);
        let mut acc = LossParts { total: 0.0, image: 0.0, affordance: 0.0, edge: 0.0, cluster: 0.0 };
        for chunk in order.chunks(tc.batch_size.max(1)) {
            let b = train.batch(chunk, t_train.as_deref().map(|t| (t, k)));
            model.zero_grad();
            let step = model.forward_backward(&b).and_then(|p| {
                if model.flat_grads().iter().any(|g| !g.is_finite()) {
                    return Err(CteError::Numeric("non-finite gradient".into()));
                }
                optimizer_step(&mut model.params_mut(), &mut state, &tc.adam)?;
                Ok(p)
            });
            let p = match step {
                Ok(p) => p,
                Err(CteError::Numeric(m)) => {
                    log::warn!("training diverged in epoch {epoch}: {m}");
                    aborted = Some(format!("epoch {epoch}: {m}"));
                    break 'epochs;
                }
                Err(e) => return Err(e),
            };
            let w = chunk.len() as f64 / train.len() as f64;
            acc.total += w * p.total;
            acc.image += w * p.image;
            acc.affordance += w * p.affordance;
            acc.edge += w * p.edge;
            acc.cluster += w * p.cluster;
        }
        let val = match dataset_loss(&model, validation, t_val.as_deref(), tc.batch_size) {
            Ok(v) => v,
            Err(CteError::Numeric(m)) => {
                aborted = Some(format!("epoch {epoch} validation: {m}"));
                break;
            }
            Err(e) => return Err(e),
        };
        log::info!("epoch {epoch}: train {:.5} validation {:.5}", acc.total, val.total);
        if val.total < best.1 {
            best = (epoch, val.total, model.flat_values());
        }
        curve.push(EpochRecord { epoch, train: acc, validation: val });
    }
    model.set_flat_values(&best.2)?;
    model.zero_grad();
    model.trained = true;
    Ok((model, TrainReport { initial, curve, best_epoch: best.0, best_validation: best.1, aborted }))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub loss: LossParts,
    /// Macro-F1 of thresholded affordance reconstruction over dimensions that
    /// occur in either truth or prediction.
    pub affordance_f1: f64,
    /// Count-weighted agreement of the cluster head with the GMM labels.
    pub cluster_accuracy: f64,
    /// Mean intra-cluster over mean inter-cluster latent distance.
    pub separation_ratio: Option<f64>,
}

/// Macro-F1 over columns of `width`-wide binary rows, weighted by `counts`.
pub fn macro_f1(pred: &[bool], truth: &[bool], width: usize, counts: &[usize]) -> f64 {
    let mut scores = Vec::new();
    for d in 0..width {
        let (mut tp, mut fp, mut fne) = (0.0, 0.0, 0.0);
        for (i, &c) in counts.iter().enumerate() {
            let c = c as f64;
            match (pred[i * width + d], truth[i * width + d]) {
                (true, true) => tp += c,
                (true, false) => fp += c,
                (false, true) => fne += c,
                _ => {}
            }
        }
        if tp + fp + fne > 0.0 {
            scores.push(2.0 * tp / (2.0 * tp + fp + fne));
        }
    }
    if scores.is_empty() {
        1.0
    } else {
        scores.iter().sum::<f64>() / scores.len() as f64
    }
}

/// Ratio of mean within-label to mean between-label distance over at most
/// `cap` evenly strided rows. `None` without both kinds of pair.
pub fn separation_ratio<T: Scalar>(latents: &[T], dim: usize, labels: &[usize], cap: usize) -> Option<f64> {
    let n = labels.len();
    let stride = n.div_ceil(cap.max(1)).max(1);
    let pick: Vec<usize> = (0..n).step_by(stride).collect();
    let (mut intra, mut ni, mut inter, mut nx) = (0.0, 0usize, 0.0, 0usize);
    for (a, &i) in pick.iter().enumerate() {
        for &j in &pick[a + 1..] {
            let d = sq_dist(&latents[i * dim..(i + 1) * dim], &latents[j * dim..(j + 1) * dim]).as_f64().sqrt();
            if labels[i] == labels[j] {
                intra += d;
                ni += 1;
            } else {
                inter += d;
                nx += 1;
            }
        }
    }
    (ni > 0 && nx > 0 && inter > 0.0).then(|| (intra / ni as f64) / (inter / nx as f64))
}

pub fn evaluate_cte<T: Scalar>(model: &CteModel<T>, ds: &CteDataset<T>, gmm: &GmmTargets) -> Result<EvalReport> {
    let targets = targets_for(&model.config, gmm, ds)?;
    let loss = dataset_loss(model, ds, targets.as_deref(), 64)?;
    let labels = gmm.labels(ds);
    let k = model.config.clusters;
    let width = crate::corpus::AFFORDANCE_DIM;
    let (mut pred, mut truth, mut latents) = (Vec::new(), Vec::new(), Vec::new());
    let mut correct = 0.0;
    let idx: Vec<usize> = (0..ds.len()).collect();
    for chunk in idx.chunks(64) {
        let b = ds.batch(chunk, None);
        let out = model.forward(&b)?;
        pred.extend(out.affordance.iter().map(|p| p.as_f64() >= 0.5));
        truth.extend(b.affordance.iter().map(|t| t.as_f64() >= 0.5));
        latents.extend_from_slice(&out.latent);
        if k == gmm.k() {
            for (r, &i) in chunk.iter().enumerate() {
                let row: Vec<f64> = out.cluster_probs[r * k..(r + 1) * k].iter().map(|v| v.as_f64()).collect();
                if crate::neuralkit::argmax(&row) == labels[i] {
                    correct += ds.counts[i] as f64;
                }
            }
        }
    }
    Ok(EvalReport {
        loss,
        affordance_f1: macro_f1(&pred, &truth, width, &ds.counts),
        cluster_accuracy: correct / ds.total_count() as f64,
        separation_ratio: separation_ratio(&latents, LATENT, &labels, 600),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clustering::GmmConfig;
    use crate::corpus::synthetic::{fixture_game, FixtureKind};
    use crate::embedding::dataset::LevelSource;
    use crate::embedding::model::LossWeights;

    fn tiny_data() -> (CteDataset<f64>, CteDataset<f64>) {
        let g = fixture_game(FixtureKind::Dungeon);
        let aff = g.affordance_map();
        let imgs: Vec<_> = g.levels.iter().take(3).map(|(_, l)| g.render(l).unwrap()).collect();
        let srcs: Vec<LevelSource> = g.levels.iter().zip(&imgs).map(|((id, l), img)| LevelSource { game: &g.name, level: id, image: img, grid: Some(l), affordances: &aff }).collect();
        let train = CteDataset::from_levels(&srcs[..2]).unwrap();
        let val = CteDataset::from_levels(&srcs[2..]).unwrap();
        // Keep the test fast: a strided subset of the unique samples.
        let keep: Vec<usize> = (0..train.len()).step_by(4).take(40).collect();
        let mut small = CteDataset::new();
        for &i in &keep {
            small.context.extend_from_slice(train.context_of(i));
            small.affordance.extend_from_slice(train.affordance_of(i));
            small.edges.extend_from_slice(train.edges_of(i));
            small.origins.push(train.origins[i].clone());
            small.counts.push(train.counts[i]);
        }
        (small, val)
    }

    fn tiny_cfg(k: usize) -> CteConfig {
        CteConfig { conv1: 2, conv2: 4, context_dense: 16, affordance_dense: 8, edge_dense: 8, clusters: k, use_edges: true, weights: LossWeights::default() }
    }

    #[test]
    fn macro_f1_by_hand() {
        // dim 0: tp 1 fp 1 -> 2/3; dim 1: tp 1 -> 1; dim 2 never set -> skipped
        let pred = [true, true, false, true, false, false];
        let truth = [true, true, false, false, false, false];
        assert!((macro_f1(&pred, &truth, 3, &[1, 1]) - (2.0 / 3.0 + 1.0) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn separation_of_two_clumps() {
        let lat = [0.0, 0.0, 0.0, 1.0, 10.0, 0.0, 10.0, 1.0];
        let r = separation_ratio(&lat, 2, &[0, 0, 1, 1], 10).unwrap();
        assert!(r < 0.2);
        assert!(separation_ratio(&lat, 2, &[0, 0, 0, 0], 10).is_none());
    }

    #[test]
    fn training_reduces_loss_and_is_deterministic() {
        let (train, val) = tiny_data();
        let gmm = GmmTargets::fit(&train, &[2, 3], 0, &GmmConfig::default(), false).unwrap();
        let cfg = tiny_cfg(gmm.k());
        let tc = TrainConfig { epochs: 6, batch_size: 8, adam: AdamConfig { lr: 3e-3, ..Default::default() } };
        let (m1, r1) = train_cte(&train, &val, &gmm, &cfg, &tc, 11).unwrap();
        let (m2, r2) = train_cte(&train, &val, &gmm, &cfg, &tc, 11).unwrap();
        assert_eq!(r1, r2);
        assert_eq!(m1.flat_values(), m2.flat_values());
        assert!(r1.aborted.is_none());
        assert!(r1.best_validation < r1.initial.total);
        assert!(m1.trained);
        let csv = r1.curves_csv();
        assert_eq!(csv.lines().count(), 2 + 2 * r1.curve.len());
    }

    #[test]
    fn ablated_training_runs() {
        let (train, val) = tiny_data();
        let gmm = GmmTargets::fit(&train, &[2], 0, &GmmConfig::default(), false).unwrap();
        let cfg = tiny_cfg(2).ablated();
        let tc = TrainConfig { epochs: 3, batch_size: 8, adam: AdamConfig { lr: 3e-3, ..Default::default() } };
        let (m, r) = train_cte(&train, &val, &gmm, &cfg, &tc, 3).unwrap();
        assert!(r.best_validation < r.initial.total);
        assert_eq!(m.encode(&val.batch(&[0], None)).unwrap().len(), LATENT);
    }

    #[test]
    fn divergence_aborts_with_stable_weights() {
        let (train, val) = tiny_data();
        let gmm = GmmTargets::fit(&train, &[2], 0, &GmmConfig::default(), false).unwrap();
        let cfg = tiny_cfg(2);
        let tc = TrainConfig { epochs: 3, batch_size: 8, adam: AdamConfig { lr: f64::INFINITY, ..Default::default() } };
        let (m, r) = train_cte(&train, &val, &gmm, &cfg, &tc, 3).unwrap();
        assert!(r.aborted.is_some());
        assert!(m.flat_values().iter().all(|v| v.is_finite()));
    }
}
