//! Square-kernel 2-D convolution and its transpose, channel-major layout.

use super::param::{Module, Param};
use crate::error::{CteError, Result};
use crate::scalar::{axpy, dot, Scalar};
use rand::Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct Geometry {
    channels: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    pad: usize,
    oh: usize,
    ow: usize,
}

impl Geometry {
    fn patch_len(&self) -> usize {
        self.channels * self.k * self.k
    }

    /// Unfolds `x` (`channels x h x w`) into `[oh*ow][channels*k*k]`.
    fn im2col<T: Scalar>(&self, x: &[T], cols: &mut [T]) {
        let pl = self.patch_len();
        for oy in 0..self.oh {
            for ox in 0..self.ow {
                let row = &mut cols[(oy * self.ow + ox) * pl..(oy * self.ow + ox + 1) * pl];
                let mut idx = 0;
                for c in 0..self.channels {
                    for ky in 0..self.k {
                        let iy = (oy * self.stride + ky) as isize - self.pad as isize;
                        for kx in 0..self.k {
                            let ix = (ox * self.stride + kx) as isize - self.pad as isize;
                            row[idx] = if iy >= 0 && ix >= 0 && (iy as usize) < self.h && (ix as usize) < self.w {
                                x[(c * self.h + iy as usize) * self.w + ix as usize]
                            } else {
                                T::zero()
                            };
                            idx += 1;
                        }
                    }
                }
            }
        }
    }

    /// Adjoint of `im2col`: scatters columns back and accumulates into `x`.
    fn col2im<T: Scalar>(&self, cols: &[T], x: &mut [T]) {
        let pl = self.patch_len();
        for oy in 0..self.oh {
            for ox in 0..self.ow {
                let row = &cols[(oy * self.ow + ox) * pl..(oy * self.ow + ox + 1) * pl];
                let mut idx = 0;
                for c in 0..self.channels {
                    for ky in 0..self.k {
                        let iy = (oy * self.stride + ky) as isize - self.pad as isize;
                        for kx in 0..self.k {
                            let ix = (ox * self.stride + kx) as isize - self.pad as isize;
                            if iy >= 0 && ix >= 0 && (iy as usize) < self.h && (ix as usize) < self.w {
                                x[(c * self.h + iy as usize) * self.w + ix as usize] += row[idx];
                            }
                            idx += 1;
                        }
                    }
                }
            }
        }
    }
}

fn conv_out(size: usize, k: usize, stride: usize, pad: usize) -> usize {
    (size + 2 * pad - k) / stride + 1
}

/// Strided convolution; weight `[out_c, in_c, k, k]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Conv2d<T> {
    pub weight: Param<T>,
    pub bias: Param<T>,
    geom: Geometry,
    out_c: usize,
}

impl<T: Scalar> Conv2d<T> {
    #[allow(clippy::too_many_arguments)]
    pub fn new<R: Rng>(name: &str, in_c: usize, out_c: usize, k: usize, stride: usize, pad: usize, in_hw: (usize, usize), rng: &mut R) -> Self {
        let (h, w) = in_hw;
        let geom = Geometry { channels: in_c, h, w, k, stride, pad, oh: conv_out(h, k, stride, pad), ow: conv_out(w, k, stride, pad) };
        Self {
            weight: Param::glorot(format!("{name}.weight"), vec![out_c, in_c, k, k], in_c * k * k, out_c * k * k, rng),
            bias: Param::zeros(format!("{name}.bias"), vec![out_c]),
            geom,
            out_c,
        }
    }

    pub fn out_shape(&self) -> (usize, usize, usize) {
        (self.out_c, self.geom.oh, self.geom.ow)
    }

    pub fn in_len(&self) -> usize {
        self.geom.channels * self.geom.h * self.geom.w
    }

    pub fn out_len(&self) -> usize {
        self.out_c * self.geom.oh * self.geom.ow
    }

    pub fn forward(&self, x: &[T], n: usize) -> Result<Vec<T>> {
        if x.len() != n * self.in_len() {
            return Err(CteError::dim(&self.weight.name, n * self.in_len(), x.len()));
        }
        let g = self.geom;
        let pl = g.patch_len();
        let npos = g.oh * g.ow;
        let mut cols = vec![T::zero(); npos * pl];
        let mut y = vec![T::zero(); n * self.out_len()];
        for (xs, ys) in x.chunks(self.in_len()).zip(y.chunks_mut(self.out_len())) {
            g.im2col(xs, &mut cols);
            for co in 0..self.out_c {
                let w = &self.weight.value[co * pl..(co + 1) * pl];
                let b = self.bias.value[co];
                for (p, col) in cols.chunks(pl).enumerate() {
                    ys[co * npos + p] = dot(w, col) + b;
                }
            }
        }
        Ok(y)
    }

    pub fn backward(&mut self, x: &[T], dy: &[T], n: usize) -> Vec<T> {
        let g = self.geom;
        let pl = g.patch_len();
        let npos = g.oh * g.ow;
        let mut cols = vec![T::zero(); npos * pl];
        let mut dcols = vec![T::zero(); npos * pl];
        let mut dx = vec![T::zero(); n * self.in_len()];
        for ((xs, dys), dxs) in x.chunks(self.in_len()).zip(dy.chunks(self.out_len())).zip(dx.chunks_mut(self.in_len())) {
            g.im2col(xs, &mut cols);
            dcols.fill(T::zero());
            for co in 0..self.out_c {
                let wr = co * pl..(co + 1) * pl;
                for p in 0..npos {
                    let d = dys[co * npos + p];
                    if d == T::zero() {
                        continue;
                    }
                    self.bias.grad[co] += d;
                    axpy(d, &cols[p * pl..(p + 1) * pl], &mut self.weight.grad[wr.clone()]);
                    axpy(d, &self.weight.value[wr.clone()], &mut dcols[p * pl..(p + 1) * pl]);
                }
            }
            g.col2im(&dcols, dxs);
        }
        dx
    }
}

impl<T: Scalar> Module<T> for Conv2d<T> {
    fn params(&self) -> Vec<&Param<T>> {
        vec![&self.weight, &self.bias]
    }
    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        vec![&mut self.weight, &mut self.bias]
    }
}

/// Transposed convolution (the adjoint of [`Conv2d`]); weight `[in_c, out_c, k, k]`.
///
/// Output side is `(in - 1) * stride - 2 * pad + k + output_padding`.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvTranspose2d<T> {
    pub weight: Param<T>,
    pub bias: Param<T>,
    /// Geometry of the forward convolution this layer transposes: its input is our output.
    geom: Geometry,
    in_c: usize,
}

impl<T: Scalar> ConvTranspose2d<T> {
    #[allow(clippy::too_many_arguments)]
    pub fn new<R: Rng>(
        name: &str,
        in_c: usize,
        out_c: usize,
        k: usize,
        stride: usize,
        pad: usize,
        output_padding: usize,
        in_hw: (usize, usize),
        rng: &mut R,
    ) -> Self {
        let (ih, iw) = in_hw;
        let oh = (ih - 1) * stride + k + output_padding - 2 * pad;
        let ow = (iw - 1) * stride + k + output_padding - 2 * pad;
        let geom = Geometry { channels: out_c, h: oh, w: ow, k, stride, pad, oh: ih, ow: iw };
        debug_assert_eq!(conv_out(oh, k, stride, pad), ih);
        Self {
            weight: Param::glorot(format!("{name}.weight"), vec![in_c, out_c, k, k], in_c * k * k, out_c * k * k, rng),
            bias: Param::zeros(format!("{name}.bias"), vec![out_c]),
            geom,
            in_c,
        }
    }

    pub fn out_shape(&self) -> (usize, usize, usize) {
        (self.geom.channels, self.geom.h, self.geom.w)
    }

    pub fn in_len(&self) -> usize {
        self.in_c * self.geom.oh * self.geom.ow
    }

    pub fn out_len(&self) -> usize {
        self.geom.channels * self.geom.h * self.geom.w
    }

    pub fn forward(&self, x: &[T], n: usize) -> Result<Vec<T>> {
        if x.len() != n * self.in_len() {
            return Err(CteError::dim(&self.weight.name, n * self.in_len(), x.len()));
        }
        let g = self.geom;
        let pl = g.patch_len();
        let npos = g.oh * g.ow;
        let plane = g.h * g.w;
        let mut cols = vec![T::zero(); npos * pl];
        let mut y = vec![T::zero(); n * self.out_len()];
        for (xs, ys) in x.chunks(self.in_len()).zip(y.chunks_mut(self.out_len())) {
            cols.fill(T::zero());
            for ci in 0..self.in_c {
                let w = &self.weight.value[ci * pl..(ci + 1) * pl];
                for p in 0..npos {
                    let v = xs[ci * npos + p];
                    if v != T::zero() {
                        axpy(v, w, &mut cols[p * pl..(p + 1) * pl]);
                    }
                }
            }
            g.col2im(&cols, ys);
            for (co, chan) in ys.chunks_mut(plane).enumerate() {
                let b = self.bias.value[co];
                for v in chan.iter_mut() {
                    *v += b;
                }
            }
        }
        Ok(y)
    }

    pub fn backward(&mut self, x: &[T], dy: &[T], n: usize) -> Vec<T> {
        let g = self.geom;
        let pl = g.patch_len();
        let npos = g.oh * g.ow;
        let plane = g.h * g.w;
        let mut dcols = vec![T::zero(); npos * pl];
        let mut dx = vec![T::zero(); n * self.in_len()];
        for ((xs, dys), dxs) in x.chunks(self.in_len()).zip(dy.chunks(self.out_len())).zip(dx.chunks_mut(self.in_len())) {
            for (co, chan) in dys.chunks(plane).enumerate() {
                self.bias.grad[co] += chan.iter().copied().sum::<T>();
            }
            g.im2col(dys, &mut dcols);
            for ci in 0..self.in_c {
                let wr = ci * pl..(ci + 1) * pl;
                for p in 0..npos {
                    let dc = &dcols[p * pl..(p + 1) * pl];
                    dxs[ci * npos + p] = dot(&self.weight.value[wr.clone()], dc);
                    let v = xs[ci * npos + p];
                    if v != T::zero() {
                        axpy(v, dc, &mut self.weight.grad[wr.clone()]);
                    }
                }
            }
        }
        dx
    }
}

impl<T: Scalar> Module<T> for ConvTranspose2d<T> {
    fn params(&self) -> Vec<&Param<T>> {
        vec![&self.weight, &self.bias]
    }
    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        vec![&mut self.weight, &mut self.bias]
    }
}
