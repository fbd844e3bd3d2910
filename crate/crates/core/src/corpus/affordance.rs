use super::level::TileSymbol;
use crate::error::{CteError, Result};
use serde::Deserialize;
use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

pub const AFFORDANCE_DIM: usize = 13;

/// Multi-hot affordance vector.
pub type AffordanceVector = [u8; AFFORDANCE_DIM];

/// Per-game mapping from tile symbol to its affordance vector.
///
/// Affordance names are opaque ordered labels loaded from the mapping file;
/// position `i` of every vector refers to `names[i]`.
#[derive(Clone, Debug, PartialEq)]
pub struct AffordanceMap {
    pub game: String,
    names: Vec<String>,
    entries: Option<BTreeMap<TileSymbol, AffordanceVector>>,
}

#[derive(Deserialize)]
struct MappingFile {
    affordances: Vec<String>,
    tiles: BTreeMap<String, Vec<String>>,
}

impl AffordanceMap {
    /// A game with no annotation: every symbol maps to the zero vector.
    pub fn unannotated(game: impl Into<String>) -> Self {
        Self { game: game.into(), names: Vec::new(), entries: None }
    }

    /// Builds a mapping from `symbol -> [affordance name, ...]` and the ordered name list.
    pub fn from_named(game: impl Into<String>, names: Vec<String>, tiles: &BTreeMap<TileSymbol, Vec<String>>) -> Result<Self> {
        if names.len() != AFFORDANCE_DIM {
            return Err(CteError::InvalidArgument(format!("expected {AFFORDANCE_DIM} affordance names, got {}", names.len())));
        }
        let mut entries = BTreeMap::new();
        for (&sym, labels) in tiles {
            let mut v = [0u8; AFFORDANCE_DIM];
            for label in labels {
                let idx = names
                    .iter()
                    .position(|n| n == label)
                    .ok_or_else(|| CteError::InvalidArgument(format!("tile {sym:?}: unknown affordance {label:?}")))?;
                v[idx] = 1;
            }
            entries.insert(sym, v);
        }
        Ok(Self { game: game.into(), names, entries: Some(entries) })
    }

    /// Parses `{"affordances": [13 names], "tiles": {"X": ["solid", ...], ...}}`.
    pub fn from_json(game: impl Into<String>, json: &str) -> Result<Self> {
        let file: MappingFile = serde_json::from_str(json)?;
        let mut tiles = BTreeMap::new();
        for (key, labels) in file.tiles {
            let mut chars = key.chars();
            match (chars.next(), chars.next()) {
                (Some(c), None) => {
                    tiles.insert(c, labels);
                }
                _ => return Err(CteError::InvalidArgument(format!("tile key {key:?} must be a single character"))),
            }
        }
        Self::from_named(game, file.affordances, &tiles)
    }

    pub fn load(game: impl Into<String>, path: &Path) -> Result<Self> {
        Self::from_json(game, &std::fs::read_to_string(path)?)
    }

    pub fn is_annotated(&self) -> bool {
        self.entries.is_some()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn symbols(&self) -> BTreeSet<TileSymbol> {
        self.entries.as_ref().map(|e| e.keys().copied().collect()).unwrap_or_default()
    }

    /// Affordance vector for `symbol`; zero for unannotated games.
    pub fn lookup(&self, symbol: TileSymbol) -> Result<AffordanceVector> {
        match &self.entries {
            None => Ok([0; AFFORDANCE_DIM]),
            Some(e) => e.get(&symbol).copied().ok_or_else(|| CteError::MissingMapping(format!("{symbol:?} in game {}", self.game))),
        }
    }

    /// Checks every symbol of a level at once and lists all missing ones.
    pub fn check_level(&self, symbols: &BTreeSet<TileSymbol>) -> Result<()> {
        if let Some(e) = &self.entries {
            let missing: Vec<String> = symbols.iter().filter(|s| !e.contains_key(s)).map(|s| format!("{s:?}")).collect();
            if !missing.is_empty() {
                return Err(CteError::MissingMapping(format!("{} in game {}", missing.join(", "), self.game)));
            }
        }
        Ok(())
    }
}

/// Free-function form of [`AffordanceMap::lookup`].
pub fn lookup_affordance(map: &AffordanceMap, symbol: TileSymbol) -> Result<AffordanceVector> {
    map.lookup(symbol)
}

#[cfg(test)]
mod tests {
    use super::*;

    const JSON: &str = r#"{
        "affordances": ["solid","passable","climbable","collectable","hazard","breakable","moving",
                        "portal","pipe","openable","empty","wall","element"],
        "tiles": {"X": ["solid"], "C": ["solid", "hazard"], "-": ["passable", "empty"]}
    }"#;

    #[test]
    fn unannotated_games_map_to_zero() {
        let m = AffordanceMap::unannotated("castle");
        assert_eq!(lookup_affordance(&m, 'q').unwrap(), [0; 13]);
        assert_eq!(lookup_affordance(&m, '#').unwrap(), [0; 13]);
    }

    #[test]
    fn single_and_double_affordances() {
        let m = AffordanceMap::from_json("blaster", JSON).unwrap();
        let solid = m.lookup('X').unwrap();
        assert_eq!(solid.iter().map(|&b| b as u32).sum::<u32>(), 1);
        assert_eq!(solid[0], 1);
        let cannon = m.lookup('C').unwrap();
        assert_eq!(cannon.iter().map(|&b| b as u32).sum::<u32>(), 2);
        assert_eq!((cannon[0], cannon[4]), (1, 1));
    }

    #[test]
    fn unknown_symbol_is_a_missing_mapping() {
        let m = AffordanceMap::from_json("blaster", JSON).unwrap();
        match m.lookup('Z') {
            Err(CteError::MissingMapping(s)) => assert!(s.contains("'Z'")),
            other => panic!("{other:?}"),
        }
        let syms: BTreeSet<char> = ['X', 'Y', 'Z'].into_iter().collect();
        match m.check_level(&syms) {
            Err(CteError::MissingMapping(s)) => assert!(s.contains("'Y'") && s.contains("'Z'")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_affordance_name_is_rejected() {
        let bad = JSON.replace("\"hazard\"]", "\"lava\"]");
        assert!(AffordanceMap::from_json("g", &bad).is_err());
    }
}
