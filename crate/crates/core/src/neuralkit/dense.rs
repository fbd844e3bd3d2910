use super::param::{Module, Param};
use crate::error::{CteError, Result};
use crate::scalar::{axpy, dot, Scalar};
use rand::Rng;

/// Fully connected layer, `y = W x + b` with `W` stored `[out, in]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense<T> {
    pub weight: Param<T>,
    pub bias: Param<T>,
    in_dim: usize,
    out_dim: usize,
}

impl<T: Scalar> Dense<T> {
    pub fn new<R: Rng>(name: &str, in_dim: usize, out_dim: usize, rng: &mut R) -> Self {
        Self {
            weight: Param::glorot(format!("{name}.weight"), vec![out_dim, in_dim], in_dim, out_dim, rng),
            bias: Param::zeros(format!("{name}.bias"), vec![out_dim]),
            in_dim,
            out_dim,
        }
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    /// Batched forward over `n` rows of `x`.
    pub fn forward(&self, x: &[T], n: usize) -> Result<Vec<T>> {
        if x.len() != n * self.in_dim {
            return Err(CteError::dim(&self.weight.name, n * self.in_dim, x.len()));
        }
        let mut y = vec![T::zero(); n * self.out_dim];
        for (xr, yr) in x.chunks(self.in_dim).zip(y.chunks_mut(self.out_dim)) {
            for (o, yo) in yr.iter_mut().enumerate() {
                let w = &self.weight.value[o * self.in_dim..(o + 1) * self.in_dim];
                *yo = dot(w, xr) + self.bias.value[o];
            }
        }
        Ok(y)
    }

    /// Accumulates parameter gradients and returns `dL/dx`.
    pub fn backward(&mut self, x: &[T], dy: &[T], n: usize) -> Vec<T> {
        debug_assert_eq!(dy.len(), n * self.out_dim);
        let mut dx = vec![T::zero(); n * self.in_dim];
        for ((xr, dyr), dxr) in x.chunks(self.in_dim).zip(dy.chunks(self.out_dim)).zip(dx.chunks_mut(self.in_dim)) {
            for (o, &g) in dyr.iter().enumerate() {
                if g == T::zero() {
                    continue;
                }
                let range = o * self.in_dim..(o + 1) * self.in_dim;
                axpy(g, xr, &mut self.weight.grad[range.clone()]);
                axpy(g, &self.weight.value[range], dxr);
                self.bias.grad[o] += g;
            }
        }
        dx
    }
}

impl<T: Scalar> Module<T> for Dense<T> {
    fn params(&self) -> Vec<&Param<T>> {
        vec![&self.weight, &self.bias]
    }
    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        vec![&mut self.weight, &mut self.bias]
    }
}
