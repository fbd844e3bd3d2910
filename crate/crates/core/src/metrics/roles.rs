use crate::corpus::TileSymbol;
use crate::error::{CteError, Result};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

fn default_gap_rows() -> usize {
    2
}

/// Per-game tile roles used by the metrics and the playability agent.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TileRoleMap {
    pub game: String,
    #[serde(default)]
    pub solids: BTreeSet<TileSymbol>,
    #[serde(default)]
    pub rewards: BTreeSet<TileSymbol>,
    #[serde(default)]
    pub enemies: BTreeSet<TileSymbol>,
    #[serde(default)]
    pub interesting: BTreeSet<TileSymbol>,
    /// Tiles that form platforms for the linearity metric; empty means `solids`.
    #[serde(default)]
    pub platforms: BTreeSet<TileSymbol>,
    /// Movement cost per tile for strategy maps.
    #[serde(default)]
    pub movement_costs: BTreeMap<TileSymbol, f64>,
    /// Bottom rows inspected when counting gaps.
    #[serde(default = "default_gap_rows")]
    pub gap_rows: usize,
}

impl TileRoleMap {
    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("role map serialises")
    }

    pub fn platform_set(&self) -> &BTreeSet<TileSymbol> {
        if self.platforms.is_empty() {
            &self.solids
        } else {
            &self.platforms
        }
    }

    pub fn is_solid(&self, s: TileSymbol) -> bool {
        self.solids.contains(&s)
    }

    /// Checks every role set against the game's symbol set and that costs are finite.
    pub fn validate(&self, symbols: &BTreeSet<TileSymbol>) -> Result<()> {
        let sets = [
            ("solids", &self.solids),
            ("rewards", &self.rewards),
            ("enemies", &self.enemies),
            ("interesting", &self.interesting),
            ("platforms", &self.platforms),
        ];
        for (name, set) in sets {
            if let Some(s) = set.iter().find(|s| !symbols.contains(s)) {
                return Err(CteError::InvalidArgument(format!("{}: {name} contains unknown symbol {s:?}", self.game)));
            }
        }
        if let Some((s, c)) = self.movement_costs.iter().find(|(_, c)| !c.is_finite()) {
            return Err(CteError::InvalidArgument(format!("{}: movement cost for {s:?} is {c}", self.game)));
        }
        Ok(())
    }
}

/// Movement costs for the strategy-map fixture game: mountains and castles -5,
/// deserts -6, rivers -8, regular land 3, forests 3, towns 4.
pub fn strategy_map_costs(land: char, forest: char, town: char, mountain: char, castle: char, desert: char, river: char) -> BTreeMap<TileSymbol, f64> {
    [(land, 3.0), (forest, 3.0), (town, 4.0), (mountain, -5.0), (castle, -5.0), (desert, -6.0), (river, -8.0)].into_iter().collect()
}
