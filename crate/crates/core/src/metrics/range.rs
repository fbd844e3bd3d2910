//! Expressive-range histograms over pairs of level metrics.

use crate::error::{CteError, Result};
use crate::io::write_atomic;
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AxisRange {
    pub min: f64,
    pub max: f64,
}

impl AxisRange {
    pub fn new(min: f64, max: f64) -> Result<Self> {
        if !(min.is_finite() && max.is_finite()) || max < min {
            return Err(CteError::InvalidArgument(format!("bad axis range [{min}, {max}]")));
        }
        Ok(Self { min, max })
    }

    /// Smallest range covering every value in every set.
    pub fn covering<'a>(sets: impl IntoIterator<Item = &'a [f64]>) -> Result<Self> {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for v in sets.into_iter().flatten() {
            lo = lo.min(*v);
            hi = hi.max(*v);
        }
        if lo > hi {
            return Err(CteError::Empty("axis values".into()));
        }
        Self::new(lo, hi)
    }

    pub fn is_degenerate(&self) -> bool {
        self.max <= self.min
    }

    /// Bin index of `v`; the top edge belongs to the last bin.
    fn bin(&self, v: f64, bins: usize) -> usize {
        let t = (v - self.min) / (self.max - self.min);
        ((t * bins as f64).floor().max(0.0) as usize).min(bins - 1)
    }
}

/// Normalized 2-D histogram, row index = y bin, column index = x bin.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RangeGrid {
    pub x: AxisRange,
    pub y: AxisRange,
    pub x_bins: usize,
    pub y_bins: usize,
    pub cells: Vec<f64>,
}

impl RangeGrid {
    pub fn get(&self, yb: usize, xb: usize) -> f64 {
        self.cells[yb * self.x_bins + xb]
    }

    pub fn to_csv(&self) -> String {
        let mut s = format!("# x=[{}, {}] y=[{}, {}]\n", self.x.min, self.x.max, self.y.min, self.y.max);
        for row in self.cells.chunks(self.x_bins) {
            s.push_str(&row.iter().map(|v| format!("{v}")).collect::<Vec<_>>().join(","));
            s.push('\n');
        }
        s
    }

    /// Heatmap with the highest y bin at the top, 16 pixels per cell.
    pub fn save_png(&self, path: &Path) -> Result<()> {
        const CELL: u32 = 16;
        let peak = self.cells.iter().cloned().fold(0.0, f64::max).max(f64::MIN_POSITIVE);
        let (w, h) = (self.x_bins as u32 * CELL, self.y_bins as u32 * CELL);
        let img = image::RgbImage::from_fn(w, h, |px, py| {
            let xb = (px / CELL) as usize;
            let yb = self.y_bins - 1 - (py / CELL) as usize;
            let t = self.get(yb, xb) / peak;
            image::Rgb([(255.0 * t) as u8, (255.0 * t * t) as u8, (80.0 + 120.0 * (1.0 - t)) as u8])
        });
        let mut bytes = Vec::new();
        img.write_to(&mut std::io::Cursor::new(&mut bytes), image::ImageFormat::Png)?;
        write_atomic(path, &bytes)
    }
}

/// Histograms `(x, y)` metric pairs into `bins x bins` cells over the given
/// ranges. A degenerate axis collapses to a single bin.
pub fn expressive_range(points: &[(f64, f64)], x: AxisRange, y: AxisRange, bins: usize) -> Result<RangeGrid> {
    if points.is_empty() {
        return Err(CteError::Empty("expressive range levels".into()));
    }
    if bins == 0 {
        return Err(CteError::InvalidArgument("expressive range needs at least one bin".into()));
    }
    let x_bins = if x.is_degenerate() { 1 } else { bins };
    let y_bins = if y.is_degenerate() { 1 } else { bins };
    if x_bins == 1 || y_bins == 1 {
        log::warn!("degenerate expressive-range axis, collapsing to a single bin");
    }
    let mut cells = vec![0.0; x_bins * y_bins];
    let w = 1.0 / points.len() as f64;
    for &(px, py) in points {
        if !(px.is_finite() && py.is_finite()) {
            return Err(CteError::Numeric(format!("non-finite metric pair ({px}, {py})")));
        }
        let xb = if x_bins == 1 { 0 } else { x.bin(px, x_bins) };
        let yb = if y_bins == 1 { 0 } else { y.bin(py, y_bins) };
        cells[yb * x_bins + xb] += w;
    }
    Ok(RangeGrid { x, y, x_bins, y_bins, cells })
}

/// `sum(min(a, b))` over matching cells; 1 for identical distributions.
pub fn histogram_intersection(a: &RangeGrid, b: &RangeGrid) -> Result<f64> {
    if a.x_bins != b.x_bins || a.y_bins != b.y_bins {
        return Err(CteError::dim("range grids", format!("{}x{}", a.y_bins, a.x_bins), format!("{}x{}", b.y_bins, b.x_bins)));
    }
    Ok(a.cells.iter().zip(&b.cells).map(|(p, q)| p.min(*q)).sum())
}
