use super::points::{percentile, DistanceMatrix, WeightedPoints};
use super::silhouette::silhouette_with;
use crate::error::{CteError, Result};
use crate::scalar::sq_dist;
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;

/// Fitted DBSCAN partition with the core points kept for later assignment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DbscanModel {
    pub eps: f64,
    pub min_pts: usize,
    pub dim: usize,
    pub k: usize,
    /// Label per fitted (unique) point; `None` is noise.
    pub labels: Vec<Option<usize>>,
    /// Flat coordinates of core points, in fitted order.
    pub core_points: Vec<f64>,
    pub core_labels: Vec<usize>,
}

impl DbscanModel {
    pub fn core_count(&self) -> usize {
        self.core_labels.len()
    }

    /// Weighted fraction of fitted points labelled noise.
    pub fn noise_fraction(&self, weights: &[f64]) -> f64 {
        let total: f64 = weights.iter().sum();
        self.labels.iter().zip(weights).filter(|(l, _)| l.is_none()).map(|(_, w)| w).sum::<f64>() / total
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        crate::io::write_atomic(path, serde_json::to_string(self)?.as_bytes())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

/// DBSCAN over weighted points with Euclidean distance.
///
/// A point is core when the weight within `eps` (itself included) reaches
/// `min_pts`. Clusters are connected components of the core graph, numbered
/// by their lowest-index core point. A non-core point joins the cluster of
/// its nearest core point within `eps` (lowest index on ties), otherwise it
/// is noise, which makes [`assign_cluster`] reproduce every fitted label.
pub fn dbscan(points: &WeightedPoints, eps: f64, min_pts: usize) -> Result<DbscanModel> {
    dbscan_with(points, &DistanceMatrix::new(points), eps, min_pts)
}

pub fn dbscan_with(points: &WeightedPoints, dist: &DistanceMatrix, eps: f64, min_pts: usize) -> Result<DbscanModel> {
    if !(eps > 0.0) || !eps.is_finite() || min_pts == 0 {
        return Err(CteError::InvalidArgument(format!("dbscan needs eps > 0 and min_pts >= 1, got {eps}, {min_pts}")));
    }
    let n = points.len();
    let w = points.weights();
    let core: Vec<bool> = (0..n)
        .map(|i| dist.row(i).iter().zip(w).filter(|(d, _)| **d <= eps).map(|(_, w)| w).sum::<f64>() >= min_pts as f64)
        .collect();
    let mut labels: Vec<Option<usize>> = vec![None; n];
    let mut k = 0;
    let mut queue = VecDeque::new();
    for start in 0..n {
        if !core[start] || labels[start].is_some() {
            continue;
        }
        labels[start] = Some(k);
        queue.push_back(start);
        while let Some(i) = queue.pop_front() {
            for j in 0..n {
                if core[j] && labels[j].is_none() && dist.get(i, j) <= eps {
                    labels[j] = Some(k);
                    queue.push_back(j);
                }
            }
        }
        k += 1;
    }
    for i in (0..n).filter(|&i| !core[i]) {
        let mut best: Option<(f64, usize)> = None;
        for j in (0..n).filter(|&j| core[j]) {
            let d = dist.get(i, j);
            if d <= eps && best.map_or(true, |(bd, _)| d < bd) {
                best = Some((d, j));
            }
        }
        labels[i] = best.and_then(|(_, j)| labels[j]);
    }
    let mut core_points = Vec::new();
    let mut core_labels = Vec::new();
    for i in (0..n).filter(|&i| core[i]) {
        core_points.extend_from_slice(points.point(i));
        core_labels.push(labels[i].expect("core points are labelled"));
    }
    Ok(DbscanModel { eps, min_pts, dim: points.dim(), k, labels, core_points, core_labels })
}

/// Cluster of the nearest core point (lowest index on ties).
pub fn assign_cluster(model: &DbscanModel, x: &[f64]) -> Result<usize> {
    if x.len() != model.dim {
        return Err(CteError::dim("assign_cluster input", model.dim, x.len()));
    }
    if model.core_labels.is_empty() {
        return Err(CteError::Model("dbscan model has no core points".into()));
    }
    let mut best = (f64::INFINITY, 0);
    for (i, p) in model.core_points.chunks_exact(model.dim).enumerate() {
        let d = sq_dist(p, x);
        if d < best.0 {
            best = (d, i);
        }
    }
    Ok(model.core_labels[best.1])
}

/// Default eps grid: `count` log-spaced values between two percentiles of the
/// nearest-neighbour distances among distinct points.
pub fn eps_grid(dist: &DistanceMatrix, count: usize, lo_pct: f64, hi_pct: f64) -> Result<Vec<f64>> {
    let nn: Vec<f64> = dist.nearest_neighbour().into_iter().filter(|d| *d > 0.0 && d.is_finite()).collect();
    if nn.is_empty() {
        return Err(CteError::TuningFailure("fewer than two distinct points".into()));
    }
    let (lo, hi) = (percentile(&nn, lo_pct), percentile(&nn, hi_pct));
    if count <= 1 || hi <= lo {
        return Ok(vec![hi]);
    }
    Ok(log_spaced(lo, hi, count))
}

/// Like [`eps_grid`], but over all pairwise distances between distinct
/// points, which reaches the scales where whole tile families merge.
pub fn pairwise_eps_grid(dist: &DistanceMatrix, count: usize, lo_pct: f64, hi_pct: f64) -> Result<Vec<f64>> {
    let n = dist.len();
    let all: Vec<f64> = (0..n).flat_map(|i| dist.row(i)[i + 1..].to_vec()).filter(|d| *d > 0.0 && d.is_finite()).collect();
    if all.is_empty() {
        return Err(CteError::TuningFailure("fewer than two distinct points".into()));
    }
    let (lo, hi) = (percentile(&all, lo_pct), percentile(&all, hi_pct));
    if count <= 1 || hi <= lo {
        return Ok(vec![hi]);
    }
    Ok(log_spaced(lo, hi, count))
}

fn log_spaced(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..count).map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp()).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TuneCandidate {
    pub eps: f64,
    pub min_pts: usize,
    pub k: usize,
    pub noise_fraction: f64,
    pub silhouette: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct TuneResult {
    pub model: DbscanModel,
    pub silhouette: f64,
    pub k: usize,
    pub candidates: Vec<TuneCandidate>,
}

/// Grid search keeping candidates with at least two clusters and at most
/// `max_noise` noise, then taking the highest silhouette (first on ties).
pub fn dbscan_tune(points: &WeightedPoints, eps_values: &[f64], min_pts_values: &[usize], max_noise: f64) -> Result<TuneResult> {
    let dist = DistanceMatrix::new(points);
    tune_with(points, &dist, eps_values, min_pts_values, max_noise, (2, usize::MAX))
}

/// [`dbscan_tune`] on a precomputed matrix, admitting only cluster counts
/// within `k_bounds` (inclusive; the lower bound is raised to 2).
pub fn tune_with(
    points: &WeightedPoints,
    dist: &DistanceMatrix,
    eps_values: &[f64],
    min_pts_values: &[usize],
    max_noise: f64,
    k_bounds: (usize, usize),
) -> Result<TuneResult> {
    if eps_values.is_empty() || min_pts_values.is_empty() {
        return Err(CteError::InvalidArgument("empty dbscan grid".into()));
    }
    let (k_lo, k_hi) = (k_bounds.0.max(2), k_bounds.1);
    let mut best: Option<(f64, DbscanModel)> = None;
    let mut candidates = Vec::new();
    for &min_pts in min_pts_values {
        for &eps in eps_values {
            let model = dbscan_with(points, dist, eps, min_pts)?;
            let noise = model.noise_fraction(points.weights());
            let silhouette = if (k_lo..=k_hi).contains(&model.k) && noise <= max_noise { silhouette_with(dist, points.weights(), &model.labels).ok() } else { None };
            log::debug!("dbscan eps={eps:.5} min_pts={min_pts} k={} noise={noise:.3} silhouette={silhouette:?}", model.k);
            candidates.push(TuneCandidate { eps, min_pts, k: model.k, noise_fraction: noise, silhouette });
            if let Some(s) = silhouette {
                if best.as_ref().map_or(true, |(b, _)| s > *b) {
                    best = Some((s, model));
                }
            }
        }
    }
    match best {
        Some((silhouette, model)) => Ok(TuneResult { k: model.k, model, silhouette, candidates }),
        None => {
            let diag = candidates.iter().map(|c| format!("eps={:.4} min_pts={} k={} noise={:.3}", c.eps, c.min_pts, c.k, c.noise_fraction)).collect::<Vec<_>>().join("; ");
            Err(CteError::TuningFailure(format!("no grid point gives {k_lo}..={k_hi} clusters with noise <= {max_noise}: {diag}")))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use crate::clustering::testdata::blobs;

    /// Textbook DBSCAN on explicit rows: returns (core flags, labels).
    fn brute(rows: &[[f64; 2]], eps: f64, min_pts: usize) -> (Vec<bool>, Vec<Option<usize>>) {
        let n = rows.len();
        let d = |i: usize, j: usize| ((rows[i][0] - rows[j][0]).powi(2) + (rows[i][1] - rows[j][1]).powi(2)).sqrt();
        let nbrs: Vec<Vec<usize>> = (0..n).map(|i| (0..n).filter(|&j| d(i, j) <= eps).collect()).collect();
        let core: Vec<bool> = nbrs.iter().map(|v| v.len() >= min_pts).collect();
        let mut labels = vec![None; n];
        let mut k = 0;
        for i in 0..n {
            if !core[i] || labels[i].is_some() {
                continue;
            }
            let mut stack = vec![i];
            labels[i] = Some(k);
            while let Some(p) = stack.pop() {
                if !core[p] {
                    continue;
                }
                for &q in &nbrs[p] {
                    if labels[q].is_none() {
                        labels[q] = Some(k);
                        stack.push(q);
                    }
                }
            }
            k += 1;
        }
        (core, labels)
    }

    #[test]
    fn two_blobs() {
        let rows = blobs(&[(0.0, 0.0), (10.0, 0.0)], 50, 0.2, 1);
        let p = WeightedPoints::unit(2, &rows).unwrap();
        let m = dbscan(&p, 1.5, 5).unwrap();
        assert_eq!(m.k, 2);
        assert!(m.labels.iter().all(|l| l.is_some()));
        assert!(m.labels[..50].iter().all(|&l| l == Some(0)));
        assert!(m.labels[50..].iter().all(|&l| l == Some(1)));
    }

    #[test]
    fn sparse_points_are_noise() {
        let p = WeightedPoints::unit(1, &[0.0, 10.0, 20.0, 30.0]).unwrap();
        let m = dbscan(&p, 1.0, 2).unwrap();
        assert_eq!(m.k, 0);
        assert!(m.labels.iter().all(|l| l.is_none()));
        assert!(assign_cluster(&m, &[0.0]).is_err());
    }

    #[test]
    fn weights_count_as_copies() {
        // A single point of weight 3 is core for min_pts 3.
        let p = WeightedPoints::weighted(1, vec![0.0, 100.0], vec![3.0, 1.0]).unwrap();
        let m = dbscan(&p, 0.5, 3).unwrap();
        assert_eq!(m.labels, vec![Some(0), None]);
    }

    #[test]
    fn assignment_examples() {
        let p = WeightedPoints::unit(1, &[0.0, 0.1, 0.2, 5.0, 5.1, 5.2]).unwrap();
        let m = dbscan(&p, 0.15, 2).unwrap();
        assert_eq!(m.k, 2);
        assert_eq!(assign_cluster(&m, &[0.1]).unwrap(), 0);
        assert_eq!(assign_cluster(&m, &[2.7]).unwrap(), 1);
        assert_eq!(assign_cluster(&m, &[2.5]).unwrap(), 0);
        assert!(assign_cluster(&m, &[1.0, 2.0]).is_err());
    }

    #[test]
    fn permutation_invariance() {
        let rows = blobs(&[(0.0, 0.0), (4.0, 4.0), (8.0, 0.0)], 30, 0.4, 7);
        let pts: Vec<[f64; 2]> = rows.chunks(2).map(|c| [c[0], c[1]]).collect();
        let base = dbscan(&WeightedPoints::unit(2, &rows).unwrap(), 0.6, 4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let mut order: Vec<usize> = (0..pts.len()).collect();
            order.shuffle(&mut rng);
            let flat: Vec<f64> = order.iter().flat_map(|&i| pts[i]).collect();
            let m = dbscan(&WeightedPoints::unit(2, &flat).unwrap(), 0.6, 4).unwrap();
            assert_eq!(m.k, base.k);
            // Same partition up to relabeling: pairwise co-membership agrees.
            for a in 0..order.len() {
                for b in 0..order.len() {
                    let same_shuffled = m.labels[a].is_some() && m.labels[a] == m.labels[b];
                    let same_base = base.labels[order[a]].is_some() && base.labels[order[a]] == base.labels[order[b]];
                    assert_eq!(same_shuffled, same_base);
                }
            }
        }
    }

    #[test]
    fn tune_three_blobs() {
        let rows = blobs(&[(0.0, 0.0), (6.0, 0.0), (3.0, 5.0)], 40, 0.3, 11);
        let p = WeightedPoints::unit(2, &rows).unwrap();
        let dist = DistanceMatrix::new(&p);
        let grid = eps_grid(&dist, 20, 1.0, 50.0).unwrap();
        let mut wide = grid.clone();
        wide.extend([0.5, 1.0, 1.5]);
        let res = dbscan_tune(&p, &wide, &[3, 5, 10], 0.1).unwrap();
        assert_eq!(res.k, 3);
        assert!(res.silhouette > 0.9, "{}", res.silhouette);
        assert_eq!(res.candidates.len(), wide.len() * 3);
    }

    #[test]
    fn k_bounds_restrict_the_choice() {
        // Six blobs in three pairs: unbounded tuning prefers the pairs.
        let rows = blobs(&[(0.0, 0.0), (1.5, 0.0), (10.0, 0.0), (11.5, 0.0), (5.0, 9.0), (6.5, 9.0)], 20, 0.15, 5);
        let p = WeightedPoints::unit(2, &rows).unwrap();
        let dist = DistanceMatrix::new(&p);
        let grid = pairwise_eps_grid(&dist, 30, 0.5, 40.0).unwrap();
        assert!(grid.windows(2).all(|w| w[0] < w[1]));
        let free = tune_with(&p, &dist, &grid, &[3], 0.05, (2, usize::MAX)).unwrap();
        assert_eq!(free.k, 3);
        let bounded = tune_with(&p, &dist, &grid, &[3], 0.05, (5, 8)).unwrap();
        assert_eq!(bounded.k, 6);
        assert!(tune_with(&p, &dist, &grid, &[3], 0.05, (7, 8)).is_err());
    }

    #[test]
    fn tune_single_blob_fails() {
        let rows = blobs(&[(0.0, 0.0)], 60, 0.3, 5);
        let p = WeightedPoints::unit(2, &rows).unwrap();
        let res = dbscan_tune(&p, &[0.5, 1.0, 2.0, 5.0], &[3, 5, 10], 0.1);
        assert!(matches!(res, Err(CteError::TuningFailure(_))));
    }

    #[test]
    fn save_load_round_trip() {
        let p = WeightedPoints::unit(1, &[0.0, 0.1, 5.0, 5.1]).unwrap();
        let m = dbscan(&p, 0.2, 2).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        m.save(&path).unwrap();
        assert_eq!(DbscanModel::load(&path).unwrap(), m);
    }

    fn grid_points() -> impl Strategy<Value = Vec<[f64; 2]>> {
        prop::collection::vec((0u8..12, 0u8..12), 1..120).prop_map(|v| v.into_iter().map(|(x, y)| [x as f64 * 0.5, y as f64 * 0.5]).collect())
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn matches_textbook_dbscan(rows in grid_points(), eps in 0.3f64..1.6, min_pts in 1usize..6) {
            let flat: Vec<f64> = rows.iter().flatten().copied().collect();
            let w = WeightedPoints::dedup(2, &flat).unwrap();
            let m = dbscan(&w, eps, min_pts).unwrap();
            let labels = w.expand(&m.labels);
            let (core, ref_labels) = brute(&rows, eps, min_pts);
            let n = rows.len();
            let ref_k = ref_labels.iter().flatten().max().map_or(0, |m| m + 1);
            prop_assert_eq!(m.k, ref_k);
            for i in 0..n {
                // Noise sets agree exactly.
                prop_assert_eq!(labels[i].is_none(), ref_labels[i].is_none());
                for j in 0..n {
                    if core[i] && core[j] {
                        prop_assert_eq!(labels[i] == labels[j], ref_labels[i] == ref_labels[j]);
                    }
                }
                // Border points sit in a cluster with a core point within eps.
                if let Some(l) = labels[i] {
                    let ok = (0..n).any(|j| core[j] && labels[j] == Some(l)
                        && ((rows[i][0] - rows[j][0]).powi(2) + (rows[i][1] - rows[j][1]).powi(2)).sqrt() <= eps);
                    prop_assert!(ok);
                }
            }
            // assign_cluster reproduces every non-noise fitted label.
            for i in 0..w.len() {
                if let Some(l) = m.labels[i] {
                    prop_assert_eq!(assign_cluster(&m, w.point(i)).unwrap(), l);
                }
            }
        }
    }
}
