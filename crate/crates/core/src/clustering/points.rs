use crate::error::{CteError, Result};
use crate::scalar::{sq_dist, Scalar};
use std::collections::HashMap;

/// Distinct points with integer multiplicities.
///
/// Clustering runs on the distinct rows only; every statistic treats a point
/// of weight `w` exactly like `w` coincident copies.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightedPoints {
    dim: usize,
    data: Vec<f64>,
    weights: Vec<f64>,
    /// Unique-row index of each original row.
    source: Vec<usize>,
}

impl WeightedPoints {
    /// Deduplicates `rows` (flat, `dim` columns) bitwise, keeping first
    /// occurrence order.
    pub fn dedup<T: Scalar>(dim: usize, rows: &[T]) -> Result<Self> {
        if dim == 0 || rows.len() % dim != 0 {
            return Err(CteError::dim("point rows", format!("a multiple of {dim}"), rows.len()));
        }
        let mut seen: HashMap<Vec<u64>, usize> = HashMap::new();
        let mut data = Vec::new();
        let mut weights: Vec<f64> = Vec::new();
        let mut source = Vec::with_capacity(rows.len() / dim);
        for row in rows.chunks_exact(dim) {
            let vals: Vec<f64> = row.iter().map(|v| v.as_f64()).collect();
            if vals.iter().any(|v| !v.is_finite()) {
                return Err(CteError::Numeric("non-finite coordinate".into()));
            }
            // +0.0 and -0.0 are the same point.
            let key: Vec<u64> = vals.iter().map(|v| (v + 0.0).to_bits()).collect();
            let id = *seen.entry(key).or_insert_with(|| {
                data.extend_from_slice(&vals);
                weights.push(0.0);
                weights.len() - 1
            });
            weights[id] += 1.0;
            source.push(id);
        }
        if weights.is_empty() {
            return Err(CteError::Empty("points".into()));
        }
        Ok(Self { dim, data, weights, source })
    }

    /// Points taken as given, each with weight 1.
    pub fn unit<T: Scalar>(dim: usize, rows: &[T]) -> Result<Self> {
        Self::weighted(dim, rows.iter().map(|v| v.as_f64()).collect(), vec![1.0; rows.len() / dim.max(1)])
    }

    pub fn weighted(dim: usize, data: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if dim == 0 || data.len() != weights.len() * dim {
            return Err(CteError::dim("weighted points", weights.len() * dim, data.len()));
        }
        if weights.is_empty() {
            return Err(CteError::Empty("points".into()));
        }
        if weights.iter().any(|w| !(*w > 0.0) || !w.is_finite()) || data.iter().any(|v| !v.is_finite()) {
            return Err(CteError::Numeric("weights must be positive and coordinates finite".into()));
        }
        let source = (0..weights.len()).collect();
        Ok(Self { dim, data, weights, source })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Unique-row index for each original row.
    pub fn source(&self) -> &[usize] {
        &self.source
    }

    /// Per-row labels expanded back to the original rows.
    pub fn expand<L: Clone>(&self, unique_labels: &[L]) -> Vec<L> {
        self.source.iter().map(|&i| unique_labels[i].clone()).collect()
    }

    pub fn dist(&self, i: usize, j: usize) -> f64 {
        sq_dist(self.point(i), self.point(j)).sqrt()
    }
}

/// Dense symmetric matrix of Euclidean distances between unique points.
#[derive(Clone, Debug)]
pub struct DistanceMatrix {
    n: usize,
    d: Vec<f64>,
}

impl DistanceMatrix {
    pub fn new(points: &WeightedPoints) -> Self {
        let n = points.len();
        let mut d = vec![0.0; n * n];
        for i in 0..n {
            for j in i + 1..n {
                let v = points.dist(i, j);
                d[i * n + j] = v;
                d[j * n + i] = v;
            }
        }
        Self { n, d }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.d[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.d[i * self.n..(i + 1) * self.n]
    }

    /// Distance from each point to its nearest distinct neighbour.
    pub fn nearest_neighbour(&self) -> Vec<f64> {
        (0..self.n)
            .map(|i| self.row(i).iter().enumerate().filter(|&(j, _)| j != i).map(|(_, &v)| v).fold(f64::INFINITY, f64::min))
            .collect()
    }
}

/// Linear-interpolated percentile (`q` in `[0, 100]`) of unsorted values.
pub fn percentile(values: &[f64], q: f64) -> f64 {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 100.0) / 100.0 * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

/// Per-feature affine map to zero weighted mean and unit weighted variance.
/// Constant features map to zero.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit(points: &WeightedPoints) -> Self {
        let d = points.dim();
        let total = points.total_weight();
        let mut mean = vec![0.0; d];
        for i in 0..points.len() {
            let w = points.weights()[i];
            for (m, x) in mean.iter_mut().zip(points.point(i)) {
                *m += w * x;
            }
        }
        mean.iter_mut().for_each(|m| *m /= total);
        let mut var = vec![0.0; d];
        for i in 0..points.len() {
            let w = points.weights()[i];
            for ((v, x), m) in var.iter_mut().zip(points.point(i)).zip(&mean) {
                *v += w * (x - m) * (x - m);
            }
        }
        let scale = var.iter().map(|v| if *v / total > 1e-12 { (v / total).sqrt() } else { 1.0 }).collect();
        Self { mean, scale }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.mean).zip(&self.scale).map(|((x, m), s)| (x - m) / s).collect()
    }

    pub fn transform(&self, points: &WeightedPoints) -> WeightedPoints {
        let data = points.data().chunks_exact(points.dim()).flat_map(|p| self.apply(p)).collect();
        WeightedPoints { dim: points.dim(), data, weights: points.weights().to_vec(), source: points.source().to_vec() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dedup_counts_multiplicity() {
        let rows = [0.0f64, 1.0, 2.0, 3.0, 0.0, 1.0, -0.0, 1.0];
        let p = WeightedPoints::dedup(2, &rows).unwrap();
        assert_eq!(p.len(), 2);
        assert_eq!(p.weights(), &[3.0, 1.0]);
        assert_eq!(p.source(), &[0, 1, 0, 0]);
        assert_eq!(p.expand(&['a', 'b']), vec!['a', 'b', 'a', 'a']);
    }

    #[test]
    fn ragged_rows_rejected() {
        assert!(WeightedPoints::dedup(3, &[1.0f64, 2.0]).is_err());
        assert!(WeightedPoints::dedup::<f64>(2, &[]).is_err());
    }

    #[test]
    fn percentile_interpolates() {
        assert_eq!(percentile(&[3.0, 1.0, 2.0, 4.0], 50.0), 2.5);
        assert_eq!(percentile(&[5.0], 1.0), 5.0);
    }

    #[test]
    fn standardizer_weighted() {
        let p = WeightedPoints::weighted(2, vec![0.0, 7.0, 3.0, 7.0], vec![3.0, 1.0]).unwrap();
        let s = Standardizer::fit(&p);
        assert!((s.mean[0] - 0.75).abs() < 1e-12);
        // weighted variance (3*0.5625 + 5.0625)/4 = 1.6875
        assert!((s.scale[0] - 1.6875f64.sqrt()).abs() < 1e-12);
        assert_eq!(s.scale[1], 1.0);
        assert_eq!(s.apply(&[0.75, 7.0]), vec![0.0, 0.0]);
    }
}
