//! Per-level style metrics over tile symbols.

use super::roles::TileRoleMap;
use crate::corpus::LevelGrid;
use crate::error::{CteError, Result};

fn count_in(level: &LevelGrid, set: &std::collections::BTreeSet<char>) -> usize {
    level.cells().iter().filter(|s| set.contains(s)).count()
}

/// Columns with no solid tile in the bottom `roles.gap_rows` rows.
pub fn gap_count(level: &LevelGrid, roles: &TileRoleMap) -> usize {
    let rows = level.rows();
    let from = rows.saturating_sub(roles.gap_rows.max(1));
    (0..level.cols()).filter(|&c| (from..rows).all(|r| !roles.is_solid(level.get(r, c)))).count()
}

/// `(2r - 0.5g - e) / T` with rewards `r`, gaps `g` and enemies `e`.
pub fn leniency(level: &LevelGrid, roles: &TileRoleMap) -> f64 {
    let r = count_in(level, &roles.rewards) as f64;
    let e = count_in(level, &roles.enemies) as f64;
    let g = gap_count(level, roles) as f64;
    (2.0 * r - 0.5 * g - e) / level.len() as f64
}

pub fn density(level: &LevelGrid, roles: &TileRoleMap) -> f64 {
    count_in(level, &roles.solids) as f64 / level.len() as f64
}

pub fn interestingness(level: &LevelGrid, roles: &TileRoleMap) -> f64 {
    count_in(level, &roles.interesting) as f64 / level.len() as f64
}

/// Centre points `(x, height)` of every platform segment: a maximal horizontal
/// run of platform tiles whose cell above is not solid (or is the top edge).
pub fn platform_centres(level: &LevelGrid, roles: &TileRoleMap) -> Vec<(f64, f64)> {
    let platforms = roles.platform_set();
    let mut out = Vec::new();
    for r in 0..level.rows() {
        let top = |c: usize| platforms.contains(&level.get(r, c)) && (r == 0 || !roles.is_solid(level.get(r - 1, c)));
        let mut c = 0;
        while c < level.cols() {
            if top(c) {
                let start = c;
                while c < level.cols() && top(c) {
                    c += 1;
                }
                let x = (start + c - 1) as f64 / 2.0;
                out.push((x, (level.rows() - 1 - r) as f64));
            } else {
                c += 1;
            }
        }
    }
    out
}

/// Mean squared vertical residual of an OLS line through `points`.
/// Fewer than two points, or all points in one column, give 0 or the plain
/// variance of the heights respectively.
pub fn ols_mse(points: &[(f64, f64)]) -> f64 {
    if points.len() < 2 {
        return 0.0;
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let icept = my - slope * mx;
    points.iter().map(|p| (p.1 - (icept + slope * p.0)).powi(2)).sum::<f64>() / n
}

pub fn linearity(level: &LevelGrid, roles: &TileRoleMap) -> f64 {
    ols_mse(&platform_centres(level, roles))
}

/// Mean absolute deviation of enemy columns. The flag is true when the level
/// has no enemies, in which case the value is 0.
pub fn enemy_sparsity(level: &LevelGrid, roles: &TileRoleMap) -> (f64, bool) {
    let xs: Vec<f64> = (0..level.rows())
        .flat_map(|r| (0..level.cols()).map(move |c| (r, c)))
        .filter(|&(r, c)| roles.enemies.contains(&level.get(r, c)))
        .map(|(_, c)| c as f64)
        .collect();
    if xs.is_empty() {
        return (0.0, true);
    }
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    (xs.iter().map(|x| (x - mean).abs()).sum::<f64>() / xs.len() as f64, false)
}

/// Sum of per-tile movement costs over the tile count.
pub fn movement_cost_leniency(level: &LevelGrid, roles: &TileRoleMap) -> Result<f64> {
    let mut total = 0.0;
    for &s in level.cells() {
        total += roles
            .movement_costs
            .get(&s)
            .ok_or_else(|| CteError::MissingMapping(format!("{}: no movement cost for {s:?}", roles.game)))?;
    }
    Ok(total / level.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::parse_vglc_level;
    use crate::metrics::roles::strategy_map_costs;
    use proptest::prelude::*;

    fn smb_roles() -> TileRoleMap {
        TileRoleMap {
            game: "t".into(),
            solids: "X?".chars().collect(),
            rewards: "?o".chars().collect(),
            enemies: "E".chars().collect(),
            interesting: "?oE".chars().collect(),
            gap_rows: 2,
            ..Default::default()
        }
    }

    #[test]
    fn leniency_hand_example() {
        // 10x20 level: one reward, one enemy, two gap columns.
        let mut g = LevelGrid::filled(10, 20, '-').unwrap();
        for c in 0..20 {
            if c != 7 && c != 8 {
                g.set(9, c, 'X');
            }
        }
        g.set(4, 3, 'o');
        g.set(8, 12, 'E');
        let roles = smb_roles();
        assert_eq!(gap_count(&g, &roles), 2);
        assert_eq!(leniency(&g, &roles), 0.0);
    }

    #[test]
    fn leniency_of_a_ground_level_with_nothing_else_is_zero() {
        let mut g = LevelGrid::filled(4, 5, '-').unwrap();
        for c in 0..5 {
            g.set(3, c, 'X');
        }
        assert_eq!(leniency(&g, &smb_roles()), 0.0);
    }

    #[test]
    fn gaps_only_look_at_bottom_rows() {
        let g = parse_vglc_level("X--\n---\n-X-\n").unwrap();
        let mut roles = smb_roles();
        assert_eq!(gap_count(&g, &roles), 2);
        roles.gap_rows = 3;
        assert_eq!(gap_count(&g, &roles), 1);
    }

    #[test]
    fn density_counts() {
        let mut g = LevelGrid::filled(10, 10, '-').unwrap();
        for i in 0..13 {
            g.set(i / 10, i % 10, 'X');
        }
        assert!((density(&g, &smb_roles()) - 0.13).abs() < 1e-12);
        let all = LevelGrid::filled(3, 3, 'X').unwrap();
        assert_eq!(density(&all, &smb_roles()), 1.0);
        let empty = LevelGrid::filled(3, 3, '-').unwrap();
        assert_eq!(interestingness(&empty, &smb_roles()), 0.0);
    }

    #[test]
    fn flat_ground_is_linear() {
        let g = parse_vglc_level("-----\n-----\nXXXXX\nXXXXX").unwrap();
        let roles = smb_roles();
        assert_eq!(platform_centres(&g, &roles), vec![(2.0, 1.0)]);
        assert_eq!(linearity(&g, &roles), 0.0);
    }

    #[test]
    fn three_platform_regression() {
        // Centres (0,0), (4,4) lie on y = x, (2,0) is 2 below it.
        // OLS: mean x=2, mean y=4/3, sxx=8, sxy=8, slope 1, intercept -2/3.
        // Residuals 2/3, 2/3, -4/3 -> MSE = (4/9 + 4/9 + 16/9)/3 = 8/9.
        let pts = [(0.0, 0.0), (2.0, 0.0), (4.0, 4.0)];
        assert!((ols_mse(&pts) - 8.0 / 9.0).abs() < 1e-12);
        let text = "----X\n-----\n-----\n-----\nX-X--";
        let g = parse_vglc_level(text).unwrap();
        assert_eq!(platform_centres(&g, &smb_roles()), vec![(4.0, 4.0), (0.0, 0.0), (2.0, 0.0)]);
        assert!((linearity(&g, &smb_roles()) - 8.0 / 9.0).abs() < 1e-12);
    }

    #[test]
    fn buried_solids_are_not_platforms() {
        let g = parse_vglc_level("--\nXX\nXX\n").unwrap();
        assert_eq!(platform_centres(&g, &smb_roles()).len(), 1);
    }

    #[test]
    fn enemy_sparsity_examples() {
        let mut g = LevelGrid::filled(2, 40, '-').unwrap();
        assert_eq!(enemy_sparsity(&g, &smb_roles()), (0.0, true));
        g.set(0, 5, 'E');
        assert_eq!(enemy_sparsity(&g, &smb_roles()), (0.0, false));
        let mut g = LevelGrid::filled(2, 40, '-').unwrap();
        for c in [10, 20, 30] {
            g.set(1, c, 'E');
        }
        let (v, none) = enemy_sparsity(&g, &smb_roles());
        assert!(!none);
        assert!((v - 20.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn movement_costs() {
        let roles = TileRoleMap { game: "gk".into(), movement_costs: strategy_map_costs('L', 'F', 'T', 'M', 'C', 'D', 'R'), ..Default::default() };
        let land = LevelGrid::filled(10, 10, 'L').unwrap();
        assert_eq!(movement_cost_leniency(&land, &roles).unwrap(), 3.0);
        let river = LevelGrid::filled(10, 10, 'R').unwrap();
        assert_eq!(movement_cost_leniency(&river, &roles).unwrap(), -8.0);
        let mut mixed = land.clone();
        for r in 0..5 {
            for c in 0..10 {
                mixed.set(r, c, 'R');
            }
        }
        assert_eq!(movement_cost_leniency(&mixed, &roles).unwrap(), -2.5);
        let unknown = LevelGrid::filled(1, 1, '?').unwrap();
        assert!(matches!(movement_cost_leniency(&unknown, &roles), Err(CteError::MissingMapping(_))));
    }

    fn level_strategy() -> impl Strategy<Value = LevelGrid> {
        (1usize..8, 1usize..12).prop_flat_map(|(r, c)| {
            prop::collection::vec(prop::sample::select(vec!['-', 'X', '?', 'o', 'E']), r * c)
                .prop_map(move |cells| LevelGrid::new(r, c, cells).unwrap())
        })
    }

    proptest! {
        #[test]
        fn metric_ranges(g in level_strategy()) {
            let roles = smb_roles();
            let d = density(&g, &roles);
            let i = interestingness(&g, &roles);
            prop_assert!((0.0..=1.0).contains(&d));
            prop_assert!((0.0..=1.0).contains(&i));
            prop_assert!(enemy_sparsity(&g, &roles).0 >= 0.0);
            prop_assert!(linearity(&g, &roles).is_finite() && linearity(&g, &roles) >= 0.0);
            prop_assert!(leniency(&g, &roles).is_finite());
            prop_assert_eq!(leniency(&g, &roles), leniency(&g.clone(), &roles));
        }
    }
}
