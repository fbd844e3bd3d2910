use super::param::Param;
use crate::error::{CteError, Result};
use crate::scalar::Scalar;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// First and second moment estimates, one buffer per parameter block.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AdamState<T> {
    pub step: u64,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
}

impl<T: Scalar> AdamState<T> {
    pub fn new() -> Self {
        Self { step: 0, m: Vec::new(), v: Vec::new() }
    }
}

/// Applies one bias-corrected Adam update using each parameter's `grad`.
pub fn optimizer_step<T: Scalar>(params: &mut [&mut Param<T>], state: &mut AdamState<T>, hyper: &AdamConfig) -> Result<()> {
    if state.m.is_empty() {
        state.m = params.iter().map(|p| vec![T::zero(); p.len()]).collect();
        state.v = state.m.clone();
    }
    if state.m.len() != params.len() {
        return Err(CteError::dim("optimizer parameter blocks", state.m.len(), params.len()));
    }
    for (i, p) in params.iter().enumerate() {
        if state.m[i].len() != p.len() || p.grad.len() != p.len() {
            return Err(CteError::dim(format!("optimizer block {}", p.name), state.m[i].len(), p.len()));
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (T::lit(hyper.beta1), T::lit(hyper.beta2));
    let c1 = T::one() - b1.powi(t);
    let c2 = T::one() - b2.powi(t);
    let lr = T::lit(hyper.lr);
    let eps = T::lit(hyper.eps);
    for (i, p) in params.iter_mut().enumerate() {
        let (m, v) = (&mut state.m[i], &mut state.v[i]);
        for j in 0..p.value.len() {
            let g = p.grad[j];
            m[j] = b1 * m[j] + (T::one() - b1) * g;
            v[j] = b2 * v[j] + (T::one() - b2) * g * g;
            let mhat = m[j] / c1;
            let vhat = v[j] / c2;
            p.value[j] -= lr * mhat / (vhat.sqrt() + eps);
        }
    }
    Ok(())
}

/// Rescales all gradients so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_grad_norm<T: Scalar>(params: &mut [&mut Param<T>], max_norm: f64) -> f64 {
    let norm = params.iter().flat_map(|p| p.grad.iter()).map(|g| g.as_f64() * g.as_f64()).sum::<f64>().sqrt();
    if norm > max_norm && norm.is_finite() {
        let s = T::lit(max_norm / norm);
        for p in params.iter_mut() {
            p.grad.iter_mut().for_each(|g| *g *= s);
        }
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let mut p = Param::<f64>::filled("p", vec![3], 0.7);
        let mut st = AdamState::new();
        for _ in 0..10 {
            optimizer_step(&mut [&mut p], &mut st, &AdamConfig::default()).unwrap();
        }
        assert_eq!(p.value, vec![0.7; 3]);
    }

    #[test]
    fn constant_gradient_step_tends_to_learning_rate() {
        let hyper = AdamConfig::default();
        let mut p = Param::<f64>::zeros("p", vec![2]);
        let mut st = AdamState::new();
        let mut last = 0.0;
        for _ in 0..2000 {
            p.grad = vec![0.3, -5.0];
            let before = p.value.clone();
            optimizer_step(&mut [&mut p], &mut st, &hyper).unwrap();
            last = (p.value[0] - before[0]).abs();
            let other = (p.value[1] - before[1]).abs();
            assert!((other - hyper.lr).abs() < 1e-9);
        }
        // With bias correction the normalised step is lr * g / (|g| + eps) from the first step on.
        assert!((last - hyper.lr).abs() < 1e-8);
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let mut p = Param::<f64>::zeros("p", vec![2]);
        let mut st = AdamState::new();
        optimizer_step(&mut [&mut p], &mut st, &AdamConfig::default()).unwrap();
        let mut q = Param::<f64>::zeros("q", vec![5]);
        assert!(optimizer_step(&mut [&mut q], &mut st, &AdamConfig::default()).is_err());
    }

    #[test]
    fn clipping_caps_global_norm() {
        let mut a = Param::<f64>::zeros("a", vec![2]);
        let mut b = Param::<f64>::zeros("b", vec![1]);
        a.grad = vec![3.0, 0.0];
        b.grad = vec![4.0];
        let before = clip_grad_norm(&mut [&mut a, &mut b], 1.0);
        assert_eq!(before, 5.0);
        assert!((a.grad[0] - 0.6).abs() < 1e-12 && (b.grad[0] - 0.8).abs() < 1e-12);
        assert!((clip_grad_norm(&mut [&mut a, &mut b], 10.0) - 1.0).abs() < 1e-12);
        assert!((b.grad[0] - 0.8).abs() < 1e-12);
    }
}
