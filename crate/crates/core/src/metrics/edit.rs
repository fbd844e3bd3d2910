//! Positionwise edit distance between generated grids and a corpus.

use crate::corpus::LevelGrid;
use crate::error::{CteError, Result};

/// Read access to a rectangular grid of comparable cells.
pub trait CellGrid {
    type Cell: PartialEq + Copy;
    fn grid_rows(&self) -> usize;
    fn grid_cols(&self) -> usize;
    fn cell(&self, row: usize, col: usize) -> Self::Cell;
}

impl CellGrid for LevelGrid {
    type Cell = char;
    fn grid_rows(&self) -> usize {
        self.rows()
    }
    fn grid_cols(&self) -> usize {
        self.cols()
    }
    fn cell(&self, row: usize, col: usize) -> char {
        self.get(row, col)
    }
}

/// Mismatches on the overlapping top-left region, plus every cell outside it.
pub fn edit_distance<G: CellGrid>(a: &G, b: &G) -> usize {
    let rows = a.grid_rows().min(b.grid_rows());
    let cols = a.grid_cols().min(b.grid_cols());
    let mut d = 0;
    for r in 0..rows {
        for c in 0..cols {
            if a.cell(r, c) != b.cell(r, c) {
                d += 1;
            }
        }
    }
    let overlap = rows * cols;
    d + a.grid_rows() * a.grid_cols() - overlap + b.grid_rows() * b.grid_cols() - overlap
}

pub fn min_edit_distance<G: CellGrid>(generated: &G, corpus: &[G]) -> Result<usize> {
    corpus
        .iter()
        .map(|c| edit_distance(generated, c))
        .min()
        .ok_or_else(|| CteError::Empty("edit-distance corpus".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn self_match_is_zero() {
        let g = LevelGrid::filled(3, 4, 'a').unwrap();
        let other = LevelGrid::filled(3, 4, 'b').unwrap();
        assert_eq!(min_edit_distance(&g, &[other.clone(), g.clone()]).unwrap(), 0);
        assert_eq!(min_edit_distance(&g, &[other]).unwrap(), 12);
    }

    #[test]
    fn three_cells_differ() {
        let a = LevelGrid::filled(4, 5, '-').unwrap();
        let mut b = a.clone();
        b.set(0, 0, 'X');
        b.set(2, 3, 'E');
        b.set(3, 4, 'X');
        assert_eq!(min_edit_distance(&a, &[b]).unwrap(), 3);
    }

    #[test]
    fn size_mismatch_counts_extra_cells() {
        let a = LevelGrid::filled(2, 3, '-').unwrap();
        let b = LevelGrid::filled(3, 2, '-').unwrap();
        // overlap 2x2 matches; a has 2 extra cells, b has 2.
        assert_eq!(edit_distance(&a, &b), 4);
    }

    #[test]
    fn empty_corpus() {
        let a = LevelGrid::filled(1, 1, '-').unwrap();
        assert!(matches!(min_edit_distance(&a, &[]), Err(CteError::Empty(_))));
    }

    fn grid() -> impl Strategy<Value = LevelGrid> {
        (1usize..5, 1usize..5).prop_flat_map(|(r, c)| {
            prop::collection::vec(prop::sample::select(vec!['a', 'b']), r * c).prop_map(move |v| LevelGrid::new(r, c, v).unwrap())
        })
    }

    proptest! {
        #[test]
        fn zero_iff_exact_match(g in grid(), corpus in prop::collection::vec(grid(), 1..5)) {
            let d = min_edit_distance(&g, &corpus).unwrap();
            prop_assert_eq!(d == 0, corpus.contains(&g));
        }
    }
}
