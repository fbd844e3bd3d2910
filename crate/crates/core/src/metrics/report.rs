//! Per-level metric rows and corpus aggregates.

use super::roles::TileRoleMap;
use super::tiles::{density, enemy_sparsity, interestingness, leniency, linearity};
use crate::agent::{playable, PhysicsConfig};
use crate::corpus::LevelGrid;
use serde::{Deserialize, Serialize};

pub const METRIC_NAMES: [&str; 6] = ["density", "leniency", "linearity", "interestingness", "enemy_sparsity", "playability"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelMetrics {
    pub level: String,
    pub leniency: f64,
    pub density: f64,
    pub linearity: f64,
    pub interestingness: f64,
    pub enemy_sparsity: f64,
    pub no_enemies: bool,
    /// `None` when no physics model applies to the game.
    pub playable: Option<bool>,
}

impl LevelMetrics {
    pub fn compute(id: &str, level: &LevelGrid, roles: &TileRoleMap, physics: Option<&PhysicsConfig>) -> Self {
        let (enemy_sparsity, no_enemies) = enemy_sparsity(level, roles);
        Self {
            level: id.to_string(),
            leniency: leniency(level, roles),
            density: density(level, roles),
            linearity: linearity(level, roles),
            interestingness: interestingness(level, roles),
            enemy_sparsity,
            no_enemies,
            playable: physics.map(|p| playable(level, roles, p).playable),
        }
    }

    pub const CSV_HEADER: &'static str = "level,density,leniency,linearity,interestingness,enemy_sparsity,no_enemies,playable";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.level,
            self.density,
            self.leniency,
            self.linearity,
            self.interestingness,
            self.enemy_sparsity,
            self.no_enemies,
            self.playable.map_or("na".to_string(), |p| p.to_string())
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    /// Population standard deviation; empty input gives zeros.
    pub fn of(values: &[f64]) -> Self {
        if values.is_empty() {
            return Self { mean: 0.0, std: 0.0 };
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Self { mean, std: var.sqrt() }
    }
}

impl std::fmt::Display for MeanStd {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:.4} ± {:.4}", self.mean, self.std)
    }
}

/// Per-level metrics plus their aggregates for one set of levels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub name: String,
    pub levels: Vec<LevelMetrics>,
    pub density: MeanStd,
    pub leniency: MeanStd,
    pub linearity: MeanStd,
    pub interestingness: MeanStd,
    pub enemy_sparsity: MeanStd,
    /// Percentage of playable levels, when playability was checked.
    pub playability: Option<f64>,
}

impl MetricReport {
    pub fn from_levels(name: &str, levels: Vec<LevelMetrics>) -> Self {
        let col = |f: fn(&LevelMetrics) -> f64| MeanStd::of(&levels.iter().map(f).collect::<Vec<_>>());
        let checked: Vec<bool> = levels.iter().filter_map(|l| l.playable).collect();
        let playability = (!checked.is_empty() && checked.len() == levels.len())
            .then(|| 100.0 * checked.iter().filter(|&&p| p).count() as f64 / checked.len() as f64);
        Self {
            name: name.to_string(),
            density: col(|l| l.density),
            leniency: col(|l| l.leniency),
            linearity: col(|l| l.linearity),
            interestingness: col(|l| l.interestingness),
            enemy_sparsity: col(|l| l.enemy_sparsity),
            playability,
            levels,
        }
    }

    pub fn compute<'a>(
        name: &str,
        levels: impl IntoIterator<Item = (&'a str, &'a LevelGrid)>,
        roles: &TileRoleMap,
        physics: Option<&PhysicsConfig>,
    ) -> Self {
        Self::from_levels(name, levels.into_iter().map(|(id, l)| LevelMetrics::compute(id, l, roles, physics)).collect())
    }

    pub fn levels_csv(&self) -> String {
        let mut s = String::from(LevelMetrics::CSV_HEADER);
        s.push('\n');
        for l in &self.levels {
            s.push_str(&l.csv_row());
            s.push('\n');
        }
        s
    }

    pub const AGGREGATE_HEADER: &'static str = "variant,density,leniency,linearity,interestingness,enemy_sparsity,playability";

    /// One aggregate row: `mean ± std` per metric, playability as a percentage.
    pub fn aggregate_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.name,
            self.density,
            self.leniency,
            self.linearity,
            self.interestingness,
            self.enemy_sparsity,
            self.playability.map_or("na".to_string(), |p| format!("{p:.1}"))
        )
    }
}

/// Aggregate table with one row per report.
pub fn aggregate_csv(reports: &[MetricReport]) -> String {
    let mut s = String::from(MetricReport::AGGREGATE_HEADER);
    s.push('\n');
    for r in reports {
        s.push_str(&r.aggregate_row());
        s.push('\n');
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::parse_vglc_level;

    #[test]
    fn aggregates_recompute_from_rows() {
        let roles = TileRoleMap { game: "t".into(), solids: "X".chars().collect(), enemies: "E".chars().collect(), ..Default::default() };
        let a = parse_vglc_level("----\n-E--\nXXXX").unwrap();
        let b = parse_vglc_level("----\n----\nXX-X").unwrap();
        let r = MetricReport::compute("d", [("a", &a), ("b", &b)], &roles, Some(&PhysicsConfig::default()));
        assert!((r.density.mean - (4.0 / 12.0 + 3.0 / 12.0) / 2.0).abs() < 1e-12);
        assert_eq!(r.playability, Some(100.0));
        let again = MetricReport::from_levels("d", r.levels.clone());
        assert_eq!(again, r);
        assert_eq!(r.levels_csv().lines().count(), 3);
        assert_eq!(aggregate_csv(&[r]).lines().nth(1).unwrap().split(',').count(), 7);
    }

    #[test]
    fn mean_std() {
        let m = MeanStd::of(&[1.0, 3.0]);
        assert_eq!((m.mean, m.std), (2.0, 1.0));
        assert_eq!(MeanStd::of(&[]).mean, 0.0);
    }
}
