use super::level::{LevelGrid, TileSymbol};
use std::collections::{BTreeMap, BTreeSet};

/// Percentage of each symbol in one level.
pub fn level_percentages(level: &LevelGrid) -> BTreeMap<TileSymbol, f64> {
    let mut counts: BTreeMap<TileSymbol, usize> = BTreeMap::new();
    for &s in level.cells() {
        *counts.entry(s).or_default() += 1;
    }
    let total = level.len() as f64;
    counts.into_iter().map(|(s, c)| (s, c as f64 / total * 100.0)).collect()
}

pub fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.sort_by(|a, b| a.total_cmp(b));
    let m = values.len() / 2;
    if values.len() % 2 == 1 {
        values[m]
    } else {
        0.5 * (values[m - 1] + values[m])
    }
}

/// Per-symbol median over levels of the symbol's percentage in each level.
/// A level lacking a symbol contributes 0 for it.
pub fn tile_distribution(levels: &[LevelGrid]) -> BTreeMap<TileSymbol, f64> {
    let per_level: Vec<_> = levels.iter().map(level_percentages).collect();
    let symbols: BTreeSet<TileSymbol> = per_level.iter().flat_map(|m| m.keys().copied()).collect();
    symbols
        .into_iter()
        .map(|s| {
            let mut v: Vec<f64> = per_level.iter().map(|m| m.get(&s).copied().unwrap_or(0.0)).collect();
            (s, median(&mut v))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::parse_vglc_level;
    use proptest::prelude::*;

    #[test]
    fn all_background_level() {
        let g = parse_vglc_level("----\n----\n").unwrap();
        let d = tile_distribution(&[g]);
        assert_eq!(d.len(), 1);
        assert_eq!(d[&'-'], 100.0);
    }

    #[test]
    fn median_over_levels_counts_absent_symbols_as_zero() {
        let a = parse_vglc_level("--\nXX\n").unwrap(); // - 50, X 50
        let b = parse_vglc_level("--\n--\n").unwrap(); // - 100
        let c = parse_vglc_level("-X\nXX\n").unwrap(); // - 25, X 75
        let d = tile_distribution(&[a, b, c]);
        assert_eq!(d[&'-'], 50.0);
        assert_eq!(d[&'X'], 50.0);
    }

    proptest! {
        #[test]
        fn single_level_percentages_sum_to_100(cells in proptest::collection::vec(prop::sample::select(vec!['-', 'X', '?', 'E']), 1..300)) {
            let g = LevelGrid::new(1, cells.len(), cells).unwrap();
            let total: f64 = level_percentages(&g).values().sum();
            prop_assert!((total - 100.0).abs() < 1e-9);
        }
    }
}
