//! Batch-mean losses. Each returns the loss and its gradient w.r.t. the
//! quantity the caller backpropagates through.

use super::act::sigmoid;
use crate::scalar::Scalar;

/// Mean squared error over all elements; gradient w.r.t. `pred`.
pub fn mse<T: Scalar>(pred: &[T], target: &[T]) -> (T, Vec<T>) {
    debug_assert_eq!(pred.len(), target.len());
    let n = T::from_usize_lossy(pred.len().max(1));
    let mut loss = T::zero();
    let mut grad = Vec::with_capacity(pred.len());
    for (&p, &t) in pred.iter().zip(target) {
        let d = p - t;
        loss += d * d;
        grad.push(T::lit(2.0) * d / n);
    }
    (loss / n, grad)
}

/// Binary cross-entropy on probabilities, clamped away from 0 and 1.
pub fn bce_prob<T: Scalar>(prob: &[T], target: &[T]) -> T {
    let eps = T::lit(1e-12);
    let n = T::from_usize_lossy(prob.len().max(1));
    let mut loss = T::zero();
    for (&p, &t) in prob.iter().zip(target) {
        let p = p.max(eps).min(T::one() - eps);
        loss -= t * p.ln() + (T::one() - t) * (T::one() - p).ln();
    }
    loss / n
}

/// Binary cross-entropy from logits; gradient w.r.t. the logits.
pub fn bce_with_logits<T: Scalar>(logits: &[T], target: &[T]) -> (T, Vec<T>) {
    let n = T::from_usize_lossy(logits.len().max(1));
    let mut loss = T::zero();
    let mut grad = Vec::with_capacity(logits.len());
    for (&z, &t) in logits.iter().zip(target) {
        // max(z,0) - z t + ln(1 + e^{-|z|})
        loss += z.max(T::zero()) - z * t + (T::one() + (-z.abs()).exp()).ln();
        grad.push((sigmoid(z) - t) / n);
    }
    (loss / n, grad)
}

/// Categorical cross-entropy of a probability row against a target row.
pub fn categorical_ce_prob<T: Scalar>(prob: &[T], target: &[T]) -> T {
    let eps = T::lit(1e-12);
    let mut loss = T::zero();
    for (&p, &t) in prob.iter().zip(target) {
        if t != T::zero() {
            loss -= t * p.max(eps).ln();
        }
    }
    loss
}

/// Softmax + categorical cross-entropy over `rows` rows of width `k`,
/// averaged over rows; gradient w.r.t. the logits.
pub fn softmax_ce<T: Scalar>(logits: &[T], target: &[T], k: usize) -> (T, Vec<T>, Vec<T>) {
    let rows = logits.len() / k;
    let nr = T::from_usize_lossy(rows.max(1));
    let mut probs = logits.to_vec();
    super::act::softmax_rows(&mut probs, k);
    let mut loss = T::zero();
    let mut grad = vec![T::zero(); logits.len()];
    for r in 0..rows {
        let p = &probs[r * k..(r + 1) * k];
        let t = &target[r * k..(r + 1) * k];
        loss += categorical_ce_prob(p, t);
        let tsum: T = t.iter().copied().sum();
        for j in 0..k {
            grad[r * k + j] = (p[j] * tsum - t[j]) / nr;
        }
    }
    (loss / nr, grad, probs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mse_of_unit_offsets_is_one() {
        let (l, g) = mse(&[1.0f64, 2.0], &[0.0, 3.0]);
        assert_eq!(l, 1.0);
        assert_eq!(g, vec![1.0, -1.0]);
    }

    #[test]
    fn bce_logits_agrees_with_probabilities() {
        let z = [0.3f64, -2.0, 4.0];
        let t = [1.0, 0.0, 1.0];
        let p: Vec<f64> = z.iter().map(|&v| sigmoid(v)).collect();
        let (a, _) = bce_with_logits(&z, &t);
        assert!((a - bce_prob(&p, &t)).abs() < 1e-12);
    }

    #[test]
    fn softmax_ce_of_uniform_logits_is_ln_k() {
        let (l, _, p) = softmax_ce(&[0.0f64; 4], &[0.0, 1.0, 0.0, 0.0], 4);
        assert!((l - 4f64.ln()).abs() < 1e-12);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
