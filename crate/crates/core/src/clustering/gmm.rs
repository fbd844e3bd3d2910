use super::points::WeightedPoints;
use super::silhouette::silhouette_score;
use crate::error::{CteError, Result};
use crate::scalar::sq_dist;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GmmConfig {
    pub max_iter: usize,
    /// Stop when the mean log-likelihood per unit weight improves less than this.
    pub tol: f64,
    pub var_floor: f64,
}

impl Default for GmmConfig {
    fn default() -> Self {
        Self { max_iter: 500, tol: 1e-6, var_floor: 1e-6 }
    }
}

/// Diagonal-covariance Gaussian mixture.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GmmModel {
    pub k: usize,
    pub dim: usize,
    pub weights: Vec<f64>,
    /// `k x dim`, row-major.
    pub means: Vec<f64>,
    pub variances: Vec<f64>,
    /// `n x k` responsibilities of the fitted points.
    pub responsibilities: Vec<f64>,
    /// Total weighted log-likelihood of the fitted points.
    pub log_likelihood: f64,
    /// Mean log-likelihood per unit weight after each E-step.
    pub history: Vec<f64>,
    pub converged: bool,
}

impl GmmModel {
    fn mean(&self, c: usize) -> &[f64] {
        &self.means[c * self.dim..(c + 1) * self.dim]
    }

    fn var(&self, c: usize) -> &[f64] {
        &self.variances[c * self.dim..(c + 1) * self.dim]
    }

    /// `ln(pi_c) + ln N(x | mu_c, diag var_c)` for every component.
    pub fn component_log_probs(&self, x: &[f64]) -> Vec<f64> {
        let ln2pi = (2.0 * std::f64::consts::PI).ln();
        (0..self.k)
            .map(|c| {
                let mut s = 0.0;
                for ((xi, m), v) in x.iter().zip(self.mean(c)).zip(self.var(c)) {
                    s += ln2pi + v.ln() + (xi - m) * (xi - m) / v;
                }
                self.weights[c].ln() - 0.5 * s
            })
            .collect()
    }

    /// Hard component of `x` (lowest index on ties).
    pub fn predict(&self, x: &[f64]) -> usize {
        crate::neuralkit::argmax(&self.component_log_probs(x))
    }

    /// Argmax of each fitted point's responsibilities.
    pub fn hard_labels(&self) -> Vec<usize> {
        self.responsibilities.chunks_exact(self.k).map(crate::neuralkit::argmax).collect()
    }

    pub fn free_parameters(&self) -> usize {
        (self.k - 1) + 2 * self.k * self.dim
    }

    /// `-2 ln L + p ln N` with `N` the total fitted weight.
    pub fn bic(&self, total_weight: f64) -> f64 {
        -2.0 * self.log_likelihood + self.free_parameters() as f64 * total_weight.ln()
    }
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Weighted k-means++ seeding: indices of `k` distinct points.
fn seed_centres(points: &WeightedPoints, k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let n = points.len();
    let pick = |scores: &[f64], rng: &mut ChaCha8Rng| -> usize {
        let total: f64 = scores.iter().sum();
        let u = rng.gen::<f64>() * total;
        let mut acc = 0.0;
        for (i, s) in scores.iter().enumerate() {
            acc += s;
            if u < acc && *s > 0.0 {
                return i;
            }
        }
        scores.iter().rposition(|s| *s > 0.0).unwrap_or(0)
    };
    let mut centres = vec![pick(points.weights(), rng)];
    let mut d2: Vec<f64> = (0..n).map(|i| sq_dist(points.point(i), points.point(centres[0]))).collect();
    while centres.len() < k {
        let scores: Vec<f64> = (0..n).map(|i| points.weights()[i] * d2[i]).collect();
        let next = pick(&scores, rng);
        centres.push(next);
        for i in 0..n {
            d2[i] = d2[i].min(sq_dist(points.point(i), points.point(next)));
        }
    }
    centres
}

fn m_step(points: &WeightedPoints, resp: &[f64], model: &mut GmmModel, floor: f64, global_var: &[f64]) {
    let (k, d, n) = (model.k, model.dim, points.len());
    let total = points.total_weight();
    for c in 0..k {
        let mass: f64 = (0..n).map(|i| points.weights()[i] * resp[i * k + c]).sum();
        if mass <= 1e-10 * total {
            // Reseed on the point the current mixture explains worst.
            let worst = (0..n)
                .map(|i| log_sum_exp(&model.component_log_probs(points.point(i))))
                .enumerate()
                .fold((0, f64::INFINITY), |b, (i, v)| if v < b.1 { (i, v) } else { b })
                .0;
            log::warn!("gmm component {c} lost its mass; reseeding at point {worst}");
            model.means[c * d..(c + 1) * d].copy_from_slice(points.point(worst));
            model.variances[c * d..(c + 1) * d].copy_from_slice(global_var);
            model.weights[c] = 1.0 / k as f64;
            continue;
        }
        let mut mean = vec![0.0; d];
        for i in 0..n {
            let r = points.weights()[i] * resp[i * k + c];
            if r != 0.0 {
                for (m, x) in mean.iter_mut().zip(points.point(i)) {
                    *m += r * x;
                }
            }
        }
        mean.iter_mut().for_each(|m| *m /= mass);
        let mut var = vec![0.0; d];
        for i in 0..n {
            let r = points.weights()[i] * resp[i * k + c];
            if r != 0.0 {
                for ((v, x), m) in var.iter_mut().zip(points.point(i)).zip(&mean) {
                    *v += r * (x - m) * (x - m);
                }
            }
        }
        var.iter_mut().for_each(|v| *v = (*v / mass).max(floor));
        model.means[c * d..(c + 1) * d].copy_from_slice(&mean);
        model.variances[c * d..(c + 1) * d].copy_from_slice(&var);
        model.weights[c] = mass / total;
    }
    let s: f64 = model.weights.iter().sum();
    model.weights.iter_mut().for_each(|w| *w /= s);
}

/// Returns the total weighted log-likelihood and fills `resp`.
fn e_step(points: &WeightedPoints, model: &GmmModel, resp: &mut [f64]) -> f64 {
    let k = model.k;
    let mut ll = 0.0;
    for i in 0..points.len() {
        let lp = model.component_log_probs(points.point(i));
        let z = log_sum_exp(&lp);
        for c in 0..k {
            resp[i * k + c] = (lp[c] - z).exp();
        }
        ll += points.weights()[i] * z;
    }
    ll
}

/// EM for a diagonal Gaussian mixture, seeded by weighted k-means++.
pub fn gmm_fit(points: &WeightedPoints, k: usize, seed: u64, cfg: &GmmConfig) -> Result<GmmModel> {
    let (n, d) = (points.len(), points.dim());
    if k == 0 || k > n {
        return Err(CteError::InvalidArgument(format!("gmm needs 1 <= k <= distinct points, got k={k}, n={n}")));
    }
    let total = points.total_weight();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centres = seed_centres(points, k, &mut rng);
    let mut resp = vec![0.0; n * k];
    for i in 0..n {
        let nearest = (0..k)
            .map(|c| sq_dist(points.point(i), points.point(centres[c])))
            .enumerate()
            .fold((0, f64::INFINITY), |b, (c, v)| if v < b.1 { (c, v) } else { b })
            .0;
        resp[i * k + nearest] = 1.0;
    }
    let global_var = {
        let all = vec![1.0; n];
        let mut m = GmmModel {
            k: 1,
            dim: d,
            weights: vec![1.0],
            means: vec![0.0; d],
            variances: vec![1.0; d],
            responsibilities: Vec::new(),
            log_likelihood: 0.0,
            history: Vec::new(),
            converged: false,
        };
        m_step(points, &all, &mut m, cfg.var_floor, &vec![1.0; d]);
        m.variances
    };
    let mut model = GmmModel {
        k,
        dim: d,
        weights: vec![1.0 / k as f64; k],
        means: vec![0.0; k * d],
        variances: vec![1.0; k * d],
        responsibilities: Vec::new(),
        log_likelihood: f64::NEG_INFINITY,
        history: Vec::new(),
        converged: false,
    };
    m_step(points, &resp, &mut model, cfg.var_floor, &global_var);
    for _ in 0..cfg.max_iter.max(1) {
        let ll = e_step(points, &model, &mut resp);
        if !ll.is_finite() {
            return Err(CteError::Numeric(format!("gmm log-likelihood is {ll}")));
        }
        let mean_ll = ll / total;
        let prev = model.history.last().copied();
        model.history.push(mean_ll);
        model.log_likelihood = ll;
        if prev.is_some_and(|p| mean_ll - p < cfg.tol) {
            model.converged = true;
            break;
        }
        m_step(points, &resp, &mut model, cfg.var_floor, &global_var);
    }
    if !model.converged {
        // Keep responsibilities consistent with the final parameters.
        model.log_likelihood = e_step(points, &model, &mut resp);
        model.history.push(model.log_likelihood / total);
    }
    model.responsibilities = resp;
    Ok(model)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KScore {
    pub k: usize,
    pub bic: f64,
    pub log_likelihood: f64,
    pub silhouette: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct KSelection {
    pub chosen: usize,
    pub scores: Vec<KScore>,
    pub models: Vec<GmmModel>,
}

impl KSelection {
    pub fn chosen_model(&self) -> &GmmModel {
        &self.models[self.scores.iter().position(|s| s.k == self.chosen).expect("chosen k was fitted")]
    }
}

/// Index of the elbow in `bics` (ordered by increasing k): the last k whose
/// BIC drop from its predecessor exceeds `fraction` of the total drop from
/// the first k to the minimum. Without any drop the first k wins.
pub fn elbow_index(bics: &[f64], fraction: f64) -> usize {
    let min = bics.iter().copied().fold(f64::INFINITY, f64::min);
    let span = bics[0] - min;
    if !(span > 0.0) {
        return 0;
    }
    (1..bics.len()).rev().find(|&i| bics[i - 1] - bics[i] > fraction * span).unwrap_or(0)
}

/// Fits one mixture per k and picks the BIC elbow. Silhouettes of the hard
/// assignments are reported alongside.
pub fn select_k_elbow(points: &WeightedPoints, k_range: &[usize], seed: u64, cfg: &GmmConfig) -> Result<KSelection> {
    let mut ks = k_range.to_vec();
    ks.sort_unstable();
    ks.dedup();
    if ks.is_empty() {
        return Err(CteError::InvalidArgument("empty k range".into()));
    }
    let total = points.total_weight();
    let mut scores = Vec::new();
    let mut models = Vec::new();
    for &k in &ks {
        let m = gmm_fit(points, k, seed, cfg)?;
        let labels: Vec<Option<usize>> = m.hard_labels().into_iter().map(Some).collect();
        let silhouette = if k >= 2 { silhouette_score(points, &labels).ok() } else { None };
        log::info!("gmm k={k} bic={:.3} silhouette={silhouette:?}", m.bic(total));
        scores.push(KScore { k, bic: m.bic(total), log_likelihood: m.log_likelihood, silhouette });
        models.push(m);
    }
    let bics: Vec<f64> = scores.iter().map(|s| s.bic).collect();
    let chosen = scores[elbow_index(&bics, 0.02)].k;
    Ok(KSelection { chosen, scores, models })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clustering::testdata::blobs;
    use proptest::prelude::*;

    #[test]
    fn two_blobs_recovered() {
        let rows = blobs(&[(0.0, 0.0), (10.0, 0.0)], 100, 0.1, 3);
        let p = WeightedPoints::unit(2, &rows).unwrap();
        let m = gmm_fit(&p, 2, 0, &GmmConfig::default()).unwrap();
        let mut means: Vec<(f64, f64)> = (0..2).map(|c| (m.means[2 * c], m.means[2 * c + 1])).collect();
        means.sort_by(|a, b| a.0.total_cmp(&b.0));
        assert!(means[0].0.abs() < 0.05 && means[0].1.abs() < 0.05, "{means:?}");
        assert!((means[1].0 - 10.0).abs() < 0.05 && means[1].1.abs() < 0.05, "{means:?}");
        let labels = m.hard_labels();
        for i in 0..200 {
            assert!(m.responsibilities[i * 2 + labels[i]] > 0.999);
            assert_eq!(labels[i], labels[if i < 100 { 0 } else { 100 }]);
        }
        assert!((m.weights.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn single_component_is_closed_form() {
        let rows = blobs(&[(1.0, -2.0)], 50, 0.7, 9);
        let p = WeightedPoints::unit(2, &rows).unwrap();
        let m = gmm_fit(&p, 1, 0, &GmmConfig::default()).unwrap();
        for dim in 0..2 {
            let xs: Vec<f64> = rows.iter().skip(dim).step_by(2).copied().collect();
            let mean = xs.iter().sum::<f64>() / 50.0;
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 50.0;
            assert!((m.means[dim] - mean).abs() < 1e-9);
            assert!((m.variances[dim] - var).abs() < 1e-9);
        }
    }

    #[test]
    fn weighted_equals_expanded() {
        let rows = [0.0, 0.0, 0.0, 1.0, 5.0, 5.2, 5.0];
        let expanded = WeightedPoints::unit(1, &rows).unwrap();
        let deduped = WeightedPoints::dedup(1, &rows).unwrap();
        let a = gmm_fit(&expanded, 2, 4, &GmmConfig::default()).unwrap();
        let b = gmm_fit(&deduped, 2, 4, &GmmConfig::default()).unwrap();
        let ma = a.means.clone();
        let mut sorted_a = ma.clone();
        sorted_a.sort_by(f64::total_cmp);
        let mut sorted_b = b.means.clone();
        sorted_b.sort_by(f64::total_cmp);
        for (x, y) in sorted_a.iter().zip(&sorted_b) {
            assert!((x - y).abs() < 1e-6, "{sorted_a:?} vs {sorted_b:?}");
        }
        assert!((a.log_likelihood - b.log_likelihood).abs() < 1e-6);
    }

    #[test]
    fn elbow_picks_three_blobs() {
        let rows = blobs(&[(0.0, 0.0), (8.0, 0.0), (4.0, 7.0)], 80, 0.5, 21);
        let p = WeightedPoints::unit(2, &rows).unwrap();
        let sel = select_k_elbow(&p, &(1..=8).collect::<Vec<_>>(), 5, &GmmConfig::default()).unwrap();
        assert_eq!(sel.chosen, 3, "{:?}", sel.scores);
        assert!(sel.scores[2].silhouette.unwrap() > 0.8);
    }

    #[test]
    fn elbow_single_blob() {
        let rows = blobs(&[(0.0, 0.0)], 200, 1.0, 8);
        let p = WeightedPoints::unit(2, &rows).unwrap();
        let sel = select_k_elbow(&p, &(1..=6).collect::<Vec<_>>(), 5, &GmmConfig::default()).unwrap();
        assert_eq!(sel.chosen, 1, "{:?}", sel.scores);
    }

    #[test]
    fn elbow_rule() {
        assert_eq!(elbow_index(&[100.0, 50.0, 10.0, 9.9, 9.95], 0.02), 2);
        assert_eq!(elbow_index(&[1.0, 2.0, 3.0], 0.02), 0);
    }

    #[test]
    fn invalid_k() {
        let p = WeightedPoints::unit(1, &[0.0, 1.0]).unwrap();
        assert!(gmm_fit(&p, 3, 0, &GmmConfig::default()).is_err());
        assert!(gmm_fit(&p, 0, 0, &GmmConfig::default()).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn em_is_monotone(seed in 0u64..1000, k in 1usize..5) {
            let rows = blobs(&[(0.0, 0.0), (3.0, 1.0), (1.0, 4.0)], 30, 0.8, seed);
            let p = WeightedPoints::unit(2, &rows).unwrap();
            let m = gmm_fit(&p, k, seed, &GmmConfig::default()).unwrap();
            for w in m.history.windows(2) {
                prop_assert!(w[1] - w[0] >= -1e-9, "{:?}", m.history);
            }
            for row in m.responsibilities.chunks(k) {
                prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            }
            prop_assert!((m.weights.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            prop_assert!(m.variances.iter().all(|v| *v >= 1e-6));
        }
    }
}
