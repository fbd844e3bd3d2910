use crate::error::{CteError, Result};
use std::collections::BTreeSet;
use std::fmt;

/// One tile character from a VGLC-style level.
pub type TileSymbol = char;

/// Rectangular grid of tile symbols, stored row-major with row 0 at the top.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct LevelGrid {
    rows: usize,
    cols: usize,
    cells: Vec<TileSymbol>,
}

impl LevelGrid {
    pub fn new(rows: usize, cols: usize, cells: Vec<TileSymbol>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(CteError::Empty("level grid needs at least one row and one column".into()));
        }
        if cells.len() != rows * cols {
            return Err(CteError::dim("level grid", rows * cols, cells.len()));
        }
        Ok(Self { rows, cols, cells })
    }

    pub fn filled(rows: usize, cols: usize, symbol: TileSymbol) -> Result<Self> {
        Self::new(rows, cols, vec![symbol; rows * cols])
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn get(&self, row: usize, col: usize) -> TileSymbol {
        self.cells[row * self.cols + col]
    }

    pub fn set(&mut self, row: usize, col: usize, s: TileSymbol) {
        self.cells[row * self.cols + col] = s;
    }

    pub fn cells(&self) -> &[TileSymbol] {
        &self.cells
    }

    pub fn row(&self, r: usize) -> &[TileSymbol] {
        &self.cells[r * self.cols..(r + 1) * self.cols]
    }

    pub fn symbols(&self) -> BTreeSet<TileSymbol> {
        self.cells.iter().copied().collect()
    }

    /// Fails with the first symbol not in `allowed`.
    pub fn validate_symbols(&self, allowed: &BTreeSet<TileSymbol>) -> Result<()> {
        for (i, s) in self.cells.iter().enumerate() {
            if !allowed.contains(s) {
                return Err(CteError::Format {
                    line: i / self.cols + 1,
                    message: format!("symbol {s:?} at column {} is not in the game's symbol set", i % self.cols + 1),
                });
            }
        }
        Ok(())
    }

    /// Canonical text form: one line per row, each terminated by `\n`.
    pub fn to_vglc_string(&self) -> String {
        let mut s = String::with_capacity(self.cells.len() + self.rows);
        for r in 0..self.rows {
            s.extend(self.row(r));
            s.push('\n');
        }
        s
    }
}

impl fmt::Display for LevelGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_vglc_string())
    }
}

/// Parses a VGLC text level: one character per tile, one line per row.
///
/// A single trailing newline is accepted; `\r\n` line endings are not
/// special-cased, so a `\r` is treated as a tile.
pub fn parse_vglc_level(text: &str) -> Result<LevelGrid> {
    let body = text.strip_suffix('\n').unwrap_or(text);
    if body.is_empty() {
        return Err(CteError::Format { line: 1, message: "empty level text".into() });
    }
    let mut cells = Vec::with_capacity(body.len());
    let mut cols = None;
    let mut rows = 0;
    for (i, line) in body.split('\n').enumerate() {
        let n = line.chars().count();
        match cols {
            None => {
                if n == 0 {
                    return Err(CteError::Format { line: 1, message: "first line is empty".into() });
                }
                cols = Some(n);
            }
            Some(c) if c != n => {
                return Err(CteError::Format { line: i + 1, message: format!("line has {n} tiles, expected {c}") });
            }
            _ => {}
        }
        cells.extend(line.chars());
        rows += 1;
    }
    LevelGrid::new(rows, cols.unwrap_or(0), cells)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn two_by_two() {
        let g = parse_vglc_level("--\nXX").unwrap();
        assert_eq!((g.rows(), g.cols()), (2, 2));
        assert_eq!(g.row(0), &['-', '-']);
        assert_eq!(g.get(1, 1), 'X');
    }

    #[test]
    fn ragged_lines_name_the_line() {
        match parse_vglc_level("abc\nde") {
            Err(CteError::Format { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn empty_input_is_rejected() {
        assert!(matches!(parse_vglc_level(""), Err(CteError::Format { .. })));
        assert!(matches!(parse_vglc_level("\n"), Err(CteError::Format { .. })));
    }

    #[test]
    fn wide_level_dimensions() {
        let line: String = std::iter::repeat('-').take(150).collect();
        let text = vec![line; 16].join("\n");
        let g = parse_vglc_level(&text).unwrap();
        assert_eq!((g.rows(), g.cols()), (16, 150));
    }

    #[test]
    fn symbol_validation() {
        let g = parse_vglc_level("-X\n?-\n").unwrap();
        let ok: BTreeSet<char> = ['-', 'X', '?'].into_iter().collect();
        assert!(g.validate_symbols(&ok).is_ok());
        let bad: BTreeSet<char> = ['-', 'X'].into_iter().collect();
        assert!(g.validate_symbols(&bad).is_err());
    }

    proptest! {
        #[test]
        fn canonical_text_round_trips(rows in 1usize..12, cols in 1usize..30, seed in any::<u64>()) {
            let alphabet: Vec<char> = "-X?SEo<>[]#.bGM".chars().collect();
            let mut s = seed;
            let mut text = String::new();
            for _ in 0..rows {
                for _ in 0..cols {
                    s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                    text.push(alphabet[(s >> 33) as usize % alphabet.len()]);
                }
                text.push('\n');
            }
            let g = parse_vglc_level(&text).unwrap();
            prop_assert_eq!(g.to_vglc_string(), text);
        }
    }
}
