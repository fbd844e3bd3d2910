//! Structural similarity between two level renders.

use crate::corpus::LevelImage;
use crate::error::{CteError, Result};

pub const SSIM_WINDOW: usize = 8;
const C1: f64 = (0.01 * 255.0) * (0.01 * 255.0);
const C2: f64 = (0.03 * 255.0) * (0.03 * 255.0);

/// Luminance on the 0..255 scale, row-major.
pub fn image_luma(img: &LevelImage) -> Vec<f64> {
    img.pixels().chunks_exact(3).map(|p| 0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64).collect()
}

/// Mean SSIM over every 8x8 window at stride 1, with population statistics.
pub fn ssim_gray(a: &[f64], b: &[f64], height: usize, width: usize) -> Result<f64> {
    if a.len() != height * width || b.len() != a.len() {
        return Err(CteError::dim("ssim buffers", height * width, a.len().max(b.len())));
    }
    if height < SSIM_WINDOW || width < SSIM_WINDOW {
        return Err(CteError::InvalidArgument(format!("ssim needs at least {SSIM_WINDOW}x{SSIM_WINDOW} pixels, got {height}x{width}")));
    }
    let n = (SSIM_WINDOW * SSIM_WINDOW) as f64;
    let mut total = 0.0;
    let mut windows = 0usize;
    for y in 0..=height - SSIM_WINDOW {
        for x in 0..=width - SSIM_WINDOW {
            let (mut sa, mut sb) = (0.0, 0.0);
            for dy in 0..SSIM_WINDOW {
                let row = (y + dy) * width + x;
                for dx in 0..SSIM_WINDOW {
                    sa += a[row + dx];
                    sb += b[row + dx];
                }
            }
            let (ma, mb) = (sa / n, sb / n);
            let (mut va, mut vb, mut cov) = (0.0, 0.0, 0.0);
            for dy in 0..SSIM_WINDOW {
                let row = (y + dy) * width + x;
                for dx in 0..SSIM_WINDOW {
                    let (da, db) = (a[row + dx] - ma, b[row + dx] - mb);
                    va += da * da;
                    vb += db * db;
                    cov += da * db;
                }
            }
            let (va, vb, cov) = (va / n, vb / n, cov / n);
            total += ((2.0 * ma * mb + C1) * (2.0 * cov + C2)) / ((ma * ma + mb * mb + C1) * (va + vb + C2));
            windows += 1;
        }
    }
    Ok(total / windows as f64)
}

pub fn ssim(a: &LevelImage, b: &LevelImage) -> Result<f64> {
    if a.height() != b.height() || a.width() != b.width() {
        return Err(CteError::dim("ssim images", format!("{}x{}", a.height(), a.width()), format!("{}x{}", b.height(), b.width())));
    }
    ssim_gray(&image_luma(a), &image_luma(b), a.height(), a.width())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pattern(h: usize, w: usize) -> LevelImage {
        let mut px = Vec::with_capacity(h * w * 3);
        for y in 0..h {
            for x in 0..w {
                px.extend_from_slice(&[((x * 13 + y * 7) % 256) as u8, ((x * x + y) % 251) as u8, ((y * 31) % 256) as u8]);
            }
        }
        LevelImage::new(h, w, px).unwrap()
    }

    #[test]
    fn identity_is_one() {
        let img = pattern(16, 32);
        assert!((ssim(&img, &img).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn symmetric() {
        let a = pattern(16, 16);
        let inv = LevelImage::new(16, 16, a.pixels().iter().map(|p| 255 - p).collect()).unwrap();
        assert_eq!(ssim(&a, &inv).unwrap(), ssim(&inv, &a).unwrap());
    }

    #[test]
    fn size_mismatch() {
        assert!(ssim(&pattern(16, 16), &pattern(16, 32)).is_err());
    }

    #[test]
    fn small_buffers_rejected() {
        assert!(ssim_gray(&[0.0; 16], &[0.0; 16], 4, 4).is_err());
    }
}
