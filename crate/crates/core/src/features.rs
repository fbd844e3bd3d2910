//! Grayscale conversion and Canny edges for single 16x16 tiles.
//!
//! Fixed parameters: 5x5 Gaussian with sigma 1, Sobel gradients, both with
//! half-sample reflection at the patch border; gradient magnitude divided by
//! its largest possible value `4 * sqrt(2)`; hysteresis thresholds
//! (0.1, 0.2) with 8-connectivity.

use crate::corpus::image::{Patch, TILE};
use crate::error::{CteError, Result};
use crate::scalar::Scalar;
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const EDGE_LEN: usize = TILE * TILE;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CannyParams {
    pub sigma: f64,
    pub kernel: usize,
    pub low: f64,
    pub high: f64,
}

impl Default for CannyParams {
    fn default() -> Self {
        Self { sigma: 1.0, kernel: 5, low: 0.1, high: 0.2 }
    }
}

/// Magnitude ties closer than this are treated as equal during suppression.
const NMS_TOLERANCE: f64 = 1e-9;

/// Binary 16x16 edge mask, row-major.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct EdgeMap(pub [u8; EDGE_LEN]);

impl EdgeMap {
    pub fn count(&self) -> usize {
        self.0.iter().filter(|&&b| b == 1).count()
    }

    pub fn get(&self, y: usize, x: usize) -> u8 {
        self.0[y * TILE + x]
    }

    pub fn as_scalars<T: Scalar>(&self) -> Vec<T> {
        self.0.iter().map(|&b| if b == 1 { T::one() } else { T::zero() }).collect()
    }

    /// Rows of `0`/`1` characters.
    pub fn to_bit_string(&self) -> String {
        self.0.chunks(TILE).map(|r| r.iter().map(|&b| if b == 1 { '1' } else { '0' }).collect::<String>()).collect::<Vec<_>>().join("\n")
    }

    /// Debug dump as a 16x16 black/white PNG.
    pub fn save_png(&self, path: &Path) -> Result<()> {
        let buf = image::GrayImage::from_fn(TILE as u32, TILE as u32, |x, y| image::Luma([self.get(y as usize, x as usize) * 255]));
        let mut bytes = Vec::new();
        buf.write_to(&mut std::io::Cursor::new(&mut bytes), image::ImageFormat::Png)?;
        crate::io::write_atomic(path, &bytes)
    }
}

/// Luminance `0.299 R + 0.587 G + 0.114 B` of a `16x16x3` interleaved patch.
pub fn to_grayscale<T: Scalar>(patch: &[T]) -> Result<Vec<T>> {
    if patch.len() != EDGE_LEN * 3 {
        return Err(CteError::dim("grayscale patch", EDGE_LEN * 3, patch.len()));
    }
    let (wr, wg, wb) = (T::lit(0.299), T::lit(0.587), T::lit(0.114));
    Ok(patch.chunks_exact(3).map(|p| wr * p[0] + wg * p[1] + wb * p[2]).collect())
}

/// Grayscale of an 8-bit patch after scaling to `[0, 1]`.
pub fn patch_grayscale(patch: &Patch) -> Vec<f64> {
    let scaled: Vec<f64> = patch.iter().map(|&b| b as f64 / 255.0).collect();
    to_grayscale(&scaled).expect("patch has 768 bytes")
}

/// Half-sample symmetric reflection: -1 -> 0, -2 -> 1, n -> n-1.
fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let mut i = i;
    loop {
        if i < 0 {
            i = -i - 1;
        } else if i >= n {
            i = 2 * n - i - 1;
        } else {
            return i as usize;
        }
    }
}

fn gaussian_kernel(sigma: f64, size: usize) -> Vec<f64> {
    let half = (size / 2) as isize;
    let one_d: Vec<f64> = (-half..=half).map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp()).collect();
    let mut k = Vec::with_capacity(size * size);
    for a in &one_d {
        for b in &one_d {
            k.push(a * b);
        }
    }
    let s: f64 = k.iter().sum();
    k.iter().map(|v| v / s).collect()
}

fn correlate(img: &[f64], kernel: &[f64], size: usize) -> Vec<f64> {
    let half = (size / 2) as isize;
    let mut out = vec![0.0; EDGE_LEN];
    for y in 0..TILE {
        for x in 0..TILE {
            let mut acc = 0.0;
            for ky in 0..size {
                let sy = reflect(y as isize + ky as isize - half, TILE);
                for kx in 0..size {
                    let sx = reflect(x as isize + kx as isize - half, TILE);
                    acc += img[sy * TILE + sx] * kernel[ky * size + kx];
                }
            }
            out[y * TILE + x] = acc;
        }
    }
    out
}

const SOBEL_X: [f64; 9] = [-1.0, 0.0, 1.0, -2.0, 0.0, 2.0, -1.0, 0.0, 1.0];
const SOBEL_Y: [f64; 9] = [-1.0, -2.0, -1.0, 0.0, 0.0, 0.0, 1.0, 2.0, 1.0];

/// Canny edge map of a 16x16 grayscale patch with values in `[0, 1]`.
pub fn canny_edges<T: Scalar>(gray: &[T]) -> Result<EdgeMap> {
    canny_edges_with(gray, &CannyParams::default())
}

pub fn canny_edges_with<T: Scalar>(gray: &[T], params: &CannyParams) -> Result<EdgeMap> {
    if gray.len() != EDGE_LEN {
        return Err(CteError::dim("canny input", EDGE_LEN, gray.len()));
    }
    let img: Vec<f64> = gray.iter().map(|v| v.as_f64()).collect();
    let blurred = correlate(&img, &gaussian_kernel(params.sigma, params.kernel), params.kernel);
    let gx = correlate(&blurred, &SOBEL_X, 3);
    let gy = correlate(&blurred, &SOBEL_Y, 3);
    let norm = 4.0 * 2f64.sqrt();
    let mag: Vec<f64> = gx.iter().zip(&gy).map(|(a, b)| (a * a + b * b).sqrt() / norm).collect();

    let at = |y: isize, x: isize| -> f64 {
        if y < 0 || x < 0 || y >= TILE as isize || x >= TILE as isize {
            0.0
        } else {
            mag[y as usize * TILE + x as usize]
        }
    };
    // Non-maximum suppression along the quantised gradient direction. A pixel
    // survives if it is not below the pixel behind it and strictly above the
    // pixel ahead, so a symmetric ridge keeps exactly its forward pixel.
    let mut thin = vec![0.0; EDGE_LEN];
    for y in 0..TILE as isize {
        for x in 0..TILE as isize {
            let i = y as usize * TILE + x as usize;
            let m = mag[i];
            if m <= 0.0 {
                continue;
            }
            let mut angle = gy[i].atan2(gx[i]).to_degrees();
            if angle < 0.0 {
                angle += 180.0;
            }
            let (dy, dx) = if !(22.5..157.5).contains(&angle) {
                (0, 1)
            } else if angle < 67.5 {
                (1, 1)
            } else if angle < 112.5 {
                (1, 0)
            } else {
                (1, -1)
            };
            let ahead = at(y + dy, x + dx);
            let behind = at(y - dy, x - dx);
            if m >= behind - NMS_TOLERANCE && m > ahead + NMS_TOLERANCE {
                thin[i] = m;
            }
        }
    }

    let mut out = [0u8; EDGE_LEN];
    let mut stack: Vec<usize> = Vec::new();
    for (i, &m) in thin.iter().enumerate() {
        if m >= params.high {
            out[i] = 1;
            stack.push(i);
        }
    }
    while let Some(i) = stack.pop() {
        let (y, x) = ((i / TILE) as isize, (i % TILE) as isize);
        for dy in -1..=1 {
            for dx in -1..=1 {
                let (ny, nx) = (y + dy, x + dx);
                if ny < 0 || nx < 0 || ny >= TILE as isize || nx >= TILE as isize {
                    continue;
                }
                let j = ny as usize * TILE + nx as usize;
                if out[j] == 0 && thin[j] >= params.low {
                    out[j] = 1;
                    stack.push(j);
                }
            }
        }
    }
    Ok(EdgeMap(out))
}

/// Edge map of an 8-bit tile patch.
pub fn patch_edges(patch: &Patch) -> EdgeMap {
    canny_edges(&patch_grayscale(patch)).expect("patch is 16x16")
}
