//! SSIM against values frozen from `oracles/ssim_oracle.py`.

use cte_core::corpus::LevelImage;
use cte_core::metrics::ssim;

fn pattern(h: usize, w: usize) -> Vec<u8> {
    let mut px = Vec::with_capacity(h * w * 3);
    for y in 0..h {
        for x in 0..w {
            px.extend_from_slice(&[((x * 13 + y * 7) % 256) as u8, ((x * x + y) % 251) as u8, ((y * 31) % 256) as u8]);
        }
    }
    px
}

fn image(px: Vec<u8>) -> LevelImage {
    LevelImage::new(16, 32, px).unwrap()
}

fn check(b: Vec<u8>, expected: f64) {
    let got = ssim(&image(pattern(16, 32)), &image(b)).unwrap();
    assert!((got - expected).abs() < 1e-6, "got {got}, expected {expected}");
}

#[test]
fn inverted() {
    check(pattern(16, 32).iter().map(|p| 255 - p).collect(), -0.89107322468008743);
}

#[test]
fn shifted() {
    let a = pattern(16, 32);
    let mut b = vec![0u8; a.len()];
    for y in 0..16 {
        for x in 0..32 {
            let src = (y * 32 + (x + 32 - 3) % 32) * 3;
            b[(y * 32 + x) * 3..(y * 32 + x) * 3 + 3].copy_from_slice(&a[src..src + 3]);
        }
    }
    check(b, 0.008533120848348329);
}

#[test]
fn blocky() {
    let mut b = pattern(16, 32);
    for y in 4..12 {
        for x in 10..20 {
            b[(y * 32 + x) * 3..(y * 32 + x) * 3 + 3].copy_from_slice(&[200, 40, 40]);
        }
    }
    check(b, 0.65979279462516915);
}
