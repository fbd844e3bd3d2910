use super::points::{DistanceMatrix, WeightedPoints};
use crate::error::{CteError, Result};

/// Mean silhouette over non-noise points (`None` labels are skipped).
///
/// Weights act as multiplicities: a point of weight `w` counts `w - 1`
/// zero-distance neighbours in its own cluster. Points alone in their
/// cluster score 0.
pub fn silhouette_score(points: &WeightedPoints, labels: &[Option<usize>]) -> Result<f64> {
    silhouette_with(&DistanceMatrix::new(points), points.weights(), labels)
}

/// As [`silhouette_score`], reusing precomputed distances.
pub fn silhouette_with(dist: &DistanceMatrix, weights: &[f64], labels: &[Option<usize>]) -> Result<f64> {
    let n = dist.len();
    if labels.len() != n || weights.len() != n {
        return Err(CteError::dim("silhouette labels", n, labels.len()));
    }
    let k = labels.iter().flatten().max().map_or(0, |m| m + 1);
    let mut size = vec![0.0; k];
    for (l, w) in labels.iter().zip(weights) {
        if let Some(l) = l {
            size[*l] += w;
        }
    }
    if size.iter().filter(|&&s| s > 0.0).count() < 2 {
        return Err(CteError::UndefinedScore("silhouette needs at least two non-empty clusters".into()));
    }
    let mut total = 0.0;
    let mut count = 0.0;
    let mut sums = vec![0.0; k];
    for i in 0..n {
        let Some(li) = labels[i] else { continue };
        sums.iter_mut().for_each(|s| *s = 0.0);
        let row = dist.row(i);
        for j in 0..n {
            if let Some(lj) = labels[j] {
                sums[lj] += weights[j] * row[j];
            }
        }
        let s = if size[li] <= 1.0 {
            0.0
        } else {
            let a = sums[li] / (size[li] - 1.0);
            let b = (0..k).filter(|&c| c != li && size[c] > 0.0).map(|c| sums[c] / size[c]).fold(f64::INFINITY, f64::min);
            let m = a.max(b);
            if m > 0.0 {
                (b - a) / m
            } else {
                0.0
            }
        };
        total += weights[i] * s;
        count += weights[i];
    }
    Ok(total / count)
}
