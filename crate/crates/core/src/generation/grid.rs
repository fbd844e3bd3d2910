//! Cluster grids, symbol vocabularies and the scan order used to turn grids
//! into token streams.

use crate::corpus::{LevelGrid, TileSymbol};
use crate::error::{CteError, Result};
use crate::io::write_atomic;
use crate::metrics::CellGrid;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::path::Path;

/// Rectangular grid of cluster ids in `[0, k)`, row 0 at the top.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterGrid {
    pub k: usize,
    rows: usize,
    cols: usize,
    cells: Vec<usize>,
}

impl ClusterGrid {
    pub fn new(k: usize, rows: usize, cols: usize, cells: Vec<usize>) -> Result<Self> {
        if cells.len() != rows * cols {
            return Err(CteError::dim("cluster grid", rows * cols, cells.len()));
        }
        if let Some(bad) = cells.iter().find(|&&c| c >= k) {
            return Err(CteError::InvalidArgument(format!("cluster id {bad} outside [0, {k})")));
        }
        Ok(Self { k, rows, cols, cells })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, row: usize, col: usize) -> usize {
        self.cells[row * self.cols + col]
    }

    pub fn cells(&self) -> &[usize] {
        &self.cells
    }

    pub fn column(&self, col: usize) -> Vec<usize> {
        (0..self.rows).map(|r| self.get(r, col)).collect()
    }

    /// `K=<k> rows=<r> cols=<c>` header, then one space-separated line per row.
    pub fn to_text(&self) -> String {
        let mut s = format!("K={} rows={} cols={}\n", self.k, self.rows, self.cols);
        for r in 0..self.rows {
            let line: Vec<String> = self.cells[r * self.cols..(r + 1) * self.cols].iter().map(|c| c.to_string()).collect();
            s.push_str(&line.join(" "));
            s.push('\n');
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines.next().ok_or_else(|| CteError::Format { line: 1, message: "missing header".into() })?;
        let mut fields = [None; 3];
        for part in header.split_whitespace() {
            let (key, value) = part.split_once('=').ok_or_else(|| CteError::Format { line: 1, message: format!("bad header field {part:?}") })?;
            let slot = match key {
                "K" => 0,
                "rows" => 1,
                "cols" => 2,
                _ => return Err(CteError::Format { line: 1, message: format!("unknown header key {key:?}") }),
            };
            fields[slot] = Some(value.parse::<usize>().map_err(|e| CteError::Format { line: 1, message: format!("{key}: {e}") })?);
        }
        let [Some(k), Some(rows), Some(cols)] = fields else {
            return Err(CteError::Format { line: 1, message: "header needs K, rows and cols".into() });
        };
        let mut cells = Vec::with_capacity(rows * cols);
        let mut seen = 0;
        for (i, line) in lines {
            let row: Vec<usize> = line
                .split_whitespace()
                .map(|t| t.parse::<usize>().map_err(|e| CteError::Format { line: i + 1, message: format!("{t:?}: {e}") }))
                .collect::<Result<_>>()?;
            if row.len() != cols {
                return Err(CteError::Format { line: i + 1, message: format!("expected {cols} ids, found {}", row.len()) });
            }
            cells.extend(row);
            seen += 1;
        }
        if seen != rows {
            return Err(CteError::Format { line: seen + 1, message: format!("expected {rows} rows, found {seen}") });
        }
        Self::new(k, rows, cols, cells)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_text().as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }
}

impl CellGrid for ClusterGrid {
    type Cell = usize;
    fn grid_rows(&self) -> usize {
        self.rows
    }
    fn grid_cols(&self) -> usize {
        self.cols
    }
    fn cell(&self, row: usize, col: usize) -> usize {
        self.get(row, col)
    }
}

/// Order in which grid cells become a token stream.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScanOrder {
    /// Bottom row first, each row left to right.
    #[default]
    RowsBottomUp,
    /// Leftmost column first, each column top to bottom.
    ColumnsLeftRight,
}

impl ScanOrder {
    /// `(row, col)` of the `i`-th token.
    pub fn position(self, i: usize, rows: usize, cols: usize) -> (usize, usize) {
        match self {
            ScanOrder::RowsBottomUp => (rows - 1 - i / cols, i % cols),
            ScanOrder::ColumnsLeftRight => (i % rows, i / rows),
        }
    }
}

pub fn linearize<G: CellGrid>(grid: &G, order: ScanOrder) -> Vec<G::Cell> {
    let (rows, cols) = (grid.grid_rows(), grid.grid_cols());
    (0..rows * cols)
        .map(|i| {
            let (r, c) = order.position(i, rows, cols);
            grid.cell(r, c)
        })
        .collect()
}

/// Inverse of [`linearize`]: row-major cells from a token stream.
pub fn delinearize<C: Copy>(seq: &[C], rows: usize, cols: usize, order: ScanOrder) -> Result<Vec<C>> {
    if seq.len() != rows * cols || seq.is_empty() {
        return Err(CteError::dim("delinearize", rows * cols, seq.len()));
    }
    let mut out = seq.to_vec();
    for (i, &t) in seq.iter().enumerate() {
        let (r, c) = order.position(i, rows, cols);
        out[r * cols + c] = t;
    }
    Ok(out)
}

/// Tile symbols numbered in sorted order, for symbol-level sequence models.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocab {
    pub symbols: Vec<TileSymbol>,
}

impl Vocab {
    pub fn from_levels<'a>(levels: impl IntoIterator<Item = &'a LevelGrid>) -> Self {
        let set: BTreeSet<TileSymbol> = levels.into_iter().flat_map(|l| l.cells().iter().copied()).collect();
        Self { symbols: set.into_iter().collect() }
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn id(&self, s: TileSymbol) -> Result<usize> {
        self.symbols.binary_search(&s).map_err(|_| CteError::MissingMapping(format!("{s:?} not in vocabulary")))
    }

    pub fn encode(&self, level: &LevelGrid) -> Result<ClusterGrid> {
        let cells = level.cells().iter().map(|&s| self.id(s)).collect::<Result<_>>()?;
        ClusterGrid::new(self.len(), level.rows(), level.cols(), cells)
    }

    pub fn decode(&self, grid: &ClusterGrid) -> Result<LevelGrid> {
        if grid.k != self.len() {
            return Err(CteError::dim("vocabulary size", self.len(), grid.k));
        }
        LevelGrid::new(grid.rows, grid.cols, grid.cells.iter().map(|&i| self.symbols[i]).collect())
    }
}
