//! LSTM layer with gate order (input, forget, candidate, output).

use super::act::sigmoid;
use super::param::{Module, Param};
use crate::error::{CteError, Result};
use crate::scalar::{axpy, dot, Scalar};
use rand::Rng;

#[derive(Clone, Debug, PartialEq)]
pub struct Lstm<T> {
    /// `[4H, I]`
    pub w_ih: Param<T>,
    /// `[4H, H]`
    pub w_hh: Param<T>,
    /// `[4H]`, forget-gate slice initialised to 1.
    pub bias: Param<T>,
    input: usize,
    hidden: usize,
}

/// Hidden and cell state for a batch, each `batch x hidden`.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmState<T> {
    pub h: Vec<T>,
    pub c: Vec<T>,
}

impl<T: Scalar> LstmState<T> {
    pub fn zeros(batch: usize, hidden: usize) -> Self {
        Self { h: vec![T::zero(); batch * hidden], c: vec![T::zero(); batch * hidden] }
    }
}

/// Everything the backward pass needs from one step.
#[derive(Clone, Debug)]
pub struct LstmStepCache<T> {
    x: Vec<T>,
    h_prev: Vec<T>,
    c_prev: Vec<T>,
    /// Activated gates, `batch x 4H`.
    gates: Vec<T>,
    tanh_c: Vec<T>,
}

impl<T: Scalar> Lstm<T> {
    pub fn new<R: Rng>(name: &str, input: usize, hidden: usize, rng: &mut R) -> Self {
        let mut bias = Param::zeros(format!("{name}.bias"), vec![4 * hidden]);
        bias.value[hidden..2 * hidden].fill(T::one());
        Self {
            w_ih: Param::glorot(format!("{name}.w_ih"), vec![4 * hidden, input], input, 4 * hidden, rng),
            w_hh: Param::glorot(format!("{name}.w_hh"), vec![4 * hidden, hidden], hidden, 4 * hidden, rng),
            bias,
            input,
            hidden,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.input
    }

    pub fn hidden_dim(&self) -> usize {
        self.hidden
    }

    /// One step for a batch of `batch` rows.
    pub fn step(&self, x: &[T], state: &LstmState<T>, batch: usize) -> Result<(LstmState<T>, LstmStepCache<T>)> {
        let (i_dim, h_dim) = (self.input, self.hidden);
        if x.len() != batch * i_dim {
            return Err(CteError::dim("lstm input", batch * i_dim, x.len()));
        }
        if state.h.len() != batch * h_dim || state.c.len() != batch * h_dim {
            return Err(CteError::dim("lstm state", batch * h_dim, state.h.len().min(state.c.len())));
        }
        let g4 = 4 * h_dim;
        let mut gates = vec![T::zero(); batch * g4];
        let mut next = LstmState::zeros(batch, h_dim);
        let mut tanh_c = vec![T::zero(); batch * h_dim];
        for b in 0..batch {
            let xb = &x[b * i_dim..(b + 1) * i_dim];
            let hb = &state.h[b * h_dim..(b + 1) * h_dim];
            let gb = &mut gates[b * g4..(b + 1) * g4];
            for (r, z) in gb.iter_mut().enumerate() {
                *z = dot(&self.w_ih.value[r * i_dim..(r + 1) * i_dim], xb)
                    + dot(&self.w_hh.value[r * h_dim..(r + 1) * h_dim], hb)
                    + self.bias.value[r];
            }
            for j in 0..h_dim {
                let ig = sigmoid(gb[j]);
                let fg = sigmoid(gb[h_dim + j]);
                let cg = gb[2 * h_dim + j].tanh();
                let og = sigmoid(gb[3 * h_dim + j]);
                gb[j] = ig;
                gb[h_dim + j] = fg;
                gb[2 * h_dim + j] = cg;
                gb[3 * h_dim + j] = og;
                let c = fg * state.c[b * h_dim + j] + ig * cg;
                let tc = c.tanh();
                next.c[b * h_dim + j] = c;
                next.h[b * h_dim + j] = og * tc;
                tanh_c[b * h_dim + j] = tc;
            }
        }
        let cache = LstmStepCache { x: x.to_vec(), h_prev: state.h.clone(), c_prev: state.c.clone(), gates, tanh_c };
        Ok((next, cache))
    }

    /// Runs a sequence; returns the hidden output per step, caches, and the final state.
    pub fn forward_seq(&self, xs: &[Vec<T>], init: LstmState<T>, batch: usize) -> Result<(Vec<Vec<T>>, Vec<LstmStepCache<T>>, LstmState<T>)> {
        let mut state = init;
        let mut outs = Vec::with_capacity(xs.len());
        let mut caches = Vec::with_capacity(xs.len());
        for x in xs {
            let (next, cache) = self.step(x, &state, batch)?;
            outs.push(next.h.clone());
            caches.push(cache);
            state = next;
        }
        Ok((outs, caches, state))
    }

    /// Backpropagation through time. `dhs[t]` is the loss gradient w.r.t. the
    /// hidden output at step `t`. Returns gradients w.r.t. each step's input.
    pub fn backward_seq(&mut self, caches: &[LstmStepCache<T>], dhs: &[Vec<T>], batch: usize) -> Vec<Vec<T>> {
        let (i_dim, h_dim) = (self.input, self.hidden);
        let g4 = 4 * h_dim;
        let mut dh_next = vec![T::zero(); batch * h_dim];
        let mut dc_next = vec![T::zero(); batch * h_dim];
        let mut dxs = vec![Vec::new(); caches.len()];
        let mut dz = vec![T::zero(); g4];
        for t in (0..caches.len()).rev() {
            let cache = &caches[t];
            let mut dx = vec![T::zero(); batch * i_dim];
            let mut dh_prev = vec![T::zero(); batch * h_dim];
            for b in 0..batch {
                let gb = &cache.gates[b * g4..(b + 1) * g4];
                for j in 0..h_dim {
                    let k = b * h_dim + j;
                    let (ig, fg, cg, og) = (gb[j], gb[h_dim + j], gb[2 * h_dim + j], gb[3 * h_dim + j]);
                    let dh = dhs[t][k] + dh_next[k];
                    let tc = cache.tanh_c[k];
                    let dc = dc_next[k] + dh * og * (T::one() - tc * tc);
                    dz[j] = dc * cg * ig * (T::one() - ig);
                    dz[h_dim + j] = dc * cache.c_prev[k] * fg * (T::one() - fg);
                    dz[2 * h_dim + j] = dc * ig * (T::one() - cg * cg);
                    dz[3 * h_dim + j] = dh * tc * og * (T::one() - og);
                    dc_next[k] = dc * fg;
                }
                let xb = &cache.x[b * i_dim..(b + 1) * i_dim];
                let hb = &cache.h_prev[b * h_dim..(b + 1) * h_dim];
                for (r, &d) in dz.iter().enumerate() {
                    if d == T::zero() {
                        continue;
                    }
                    self.bias.grad[r] += d;
                    axpy(d, xb, &mut self.w_ih.grad[r * i_dim..(r + 1) * i_dim]);
                    axpy(d, hb, &mut self.w_hh.grad[r * h_dim..(r + 1) * h_dim]);
                    axpy(d, &self.w_ih.value[r * i_dim..(r + 1) * i_dim], &mut dx[b * i_dim..(b + 1) * i_dim]);
                    axpy(d, &self.w_hh.value[r * h_dim..(r + 1) * h_dim], &mut dh_prev[b * h_dim..(b + 1) * h_dim]);
                }
            }
            dh_next = dh_prev;
            dxs[t] = dx;
        }
        dxs
    }
}

impl<T: Scalar> Module<T> for Lstm<T> {
    fn params(&self) -> Vec<&Param<T>> {
        vec![&self.w_ih, &self.w_hh, &self.bias]
    }
    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        vec![&mut self.w_ih, &mut self.w_hh, &mut self.bias]
    }
}

/// Single-sample LSTM cell update: returns `(h', c')`.
pub fn lstm_step<T: Scalar>(x: &[T], h: &[T], c: &[T], params: &Lstm<T>) -> Result<(Vec<T>, Vec<T>)> {
    let state = LstmState { h: h.to_vec(), c: c.to_vec() };
    let (next, _) = params.step(x, &state, 1)?;
    Ok((next.h, next.c))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn zeroed(input: usize, hidden: usize) -> Lstm<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut l = Lstm::new("l", input, hidden, &mut rng);
        for p in l.params_mut() {
            p.value.fill(0.0);
        }
        l
    }

    #[test]
    fn zero_params_and_zero_cell_give_zero_state() {
        let l = zeroed(3, 4);
        let (h, c) = lstm_step(&[0.3, -1.0, 2.0], &[0.1, 0.2, -0.3, 0.4], &[0.0; 4], &l).unwrap();
        assert!(h.iter().all(|&v| v == 0.0));
        assert!(c.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_params_halve_the_cell() {
        let l = zeroed(2, 3);
        let v = [0.8, -2.0, 5.0];
        let (_, c) = lstm_step(&[0.0, 0.0], &[0.0; 3], &v, &l).unwrap();
        for (ci, vi) in c.iter().zip(&v) {
            assert!((ci - 0.5 * vi).abs() < 1e-15);
        }
    }

    #[test]
    fn scalar_oracle_agreement() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let l = Lstm::<f64>::new("l", 3, 2, &mut rng);
        let x = [0.5, -0.25, 1.5];
        let h = [0.2, -0.7];
        let c = [1.1, -0.4];
        let (h2, c2) = lstm_step(&x, &h, &c, &l).unwrap();
        let sig = |z: f64| 1.0 / (1.0 + (-z).exp());
        let hd = 2;
        for j in 0..hd {
            let pre = |gate: usize| -> f64 {
                let r = gate * hd + j;
                let mut z = l.bias.value[r];
                for k in 0..3 {
                    z += l.w_ih.value[r * 3 + k] * x[k];
                }
                for k in 0..hd {
                    z += l.w_hh.value[r * hd + k] * h[k];
                }
                z
            };
            let cj = sig(pre(1)) * c[j] + sig(pre(0)) * pre(2).tanh();
            let hj = sig(pre(3)) * cj.tanh();
            assert!((cj - c2[j]).abs() < 1e-12);
            assert!((hj - h2[j]).abs() < 1e-12);
        }
    }

    #[test]
    fn mismatched_input_is_a_dimension_error() {
        let l = zeroed(3, 2);
        assert!(matches!(lstm_step(&[1.0, 2.0], &[0.0; 2], &[0.0; 2], &l), Err(CteError::Dimension { .. })));
    }
}
