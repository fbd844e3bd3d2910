//! Game directories on disk and the level splits recorded by `ingest`.
//!
//! A game directory holds `levels/*.txt` and optionally `images/<id>.png`,
//! `affordances.json` and `roles.json`.

use crate::config::GameEntry;
use crate::error::{CliError, CliResult};
use cte_core::corpus::{parse_vglc_level, split_levels, AffordanceMap, LevelGrid, LevelImage, Tileset};
use cte_core::embedding::LevelSource;
use cte_core::metrics::TileRoleMap;
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Clone, Debug)]
pub struct LevelData {
    pub id: String,
    pub grid: LevelGrid,
    pub image: Option<LevelImage>,
}

#[derive(Clone, Debug)]
pub struct GameData {
    pub name: String,
    pub physics: bool,
    pub levels: Vec<LevelData>,
    pub affordances: AffordanceMap,
    pub roles: Option<TileRoleMap>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl GameData {
    pub fn load(entry: &GameEntry) -> CliResult<Self> {
        let dir = &entry.path;
        let mut files: Vec<_> = std::fs::read_dir(dir.join("levels"))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "txt"))
            .collect();
        files.sort();
        if entry.max_levels > 0 {
            files.truncate(entry.max_levels);
        }
        if files.is_empty() {
            return Err(CliError::Config(format!("game {:?}: no levels in {}", entry.name, dir.join("levels").display())));
        }
        let mut levels = Vec::with_capacity(files.len());
        for f in files {
            let id = f.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
            let grid = parse_vglc_level(&std::fs::read_to_string(&f)?).map_err(|e| CliError::Config(format!("{}: {e}", f.display())))?;
            let png = dir.join("images").join(format!("{id}.png"));
            let image = if png.is_file() { Some(LevelImage::load_png(&png)?) } else { None };
            if let Some(img) = &image {
                if (img.tile_rows(), img.tile_cols()) != (grid.rows(), grid.cols()) {
                    return Err(CliError::Config(format!("{}: image is {}x{} tiles, level is {}x{}", png.display(), img.tile_rows(), img.tile_cols(), grid.rows(), grid.cols())));
                }
            }
            levels.push(LevelData { id, grid, image });
        }
        let aff_path = dir.join("affordances.json");
        let affordances = if aff_path.is_file() { AffordanceMap::load(&entry.name, &aff_path)? } else { AffordanceMap::unannotated(&entry.name) };
        let roles_path = dir.join("roles.json");
        let roles = if roles_path.is_file() { Some(TileRoleMap::load(&roles_path)?) } else { None };
        let symbols = levels.iter().flat_map(|l| l.grid.symbols()).collect();
        affordances.check_level(&symbols).map_err(|e| CliError::Config(format!("game {:?}: {e}", entry.name)))?;
        if let Some(r) = &roles {
            r.validate(&symbols).map_err(|e| CliError::Config(format!("game {:?} roles: {e}", entry.name)))?;
        }
        Ok(Self { name: entry.name.clone(), physics: entry.physics, levels, affordances, roles })
    }

    pub fn has_images(&self) -> bool {
        self.levels.iter().all(|l| l.image.is_some())
    }

    pub fn level(&self, id: &str) -> Option<&LevelData> {
        self.levels.iter().find(|l| l.id == id)
    }

    pub fn source<'a>(&'a self, level: &'a LevelData) -> CliResult<LevelSource<'a>> {
        let image = level.image.as_ref().ok_or_else(|| CliError::Config(format!("level {} of {} has no image", level.id, self.name)))?;
        Ok(LevelSource { game: &self.name, level: &level.id, image, grid: Some(&level.grid), affordances: &self.affordances })
    }

    /// Sprites of every symbol seen in the level images.
    pub fn tileset(&self) -> CliResult<Tileset> {
        let mut ts = Tileset::new();
        for l in &self.levels {
            let Some(img) = &l.image else { continue };
            for r in 0..l.grid.rows() {
                for c in 0..l.grid.cols() {
                    let s = l.grid.get(r, c);
                    if ts.sprite_of(s).is_none() {
                        ts.insert(s, img.tile_patch(r, c)?)?;
                    }
                }
            }
        }
        Ok(ts)
    }
}

/// Draws a symbol grid with a game's sprites.
pub fn render_symbols(level: &LevelGrid, tileset: &Tileset) -> CliResult<LevelImage> {
    if let Some(s) = level.symbols().into_iter().find(|&s| tileset.sprite_of(s).is_none()) {
        return Err(CliError::Core(cte_core::CteError::MissingMapping(format!("no sprite for {s:?}"))));
    }
    Ok(LevelImage::from_tiles(level.rows(), level.cols(), |r, c| tileset.sprite_of(level.get(r, c)).expect("checked above"))?)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelEntry {
    pub id: String,
    pub rows: usize,
    pub cols: usize,
    pub split: Split,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GameSummary {
    pub name: String,
    pub annotated: bool,
    pub has_images: bool,
    pub has_roles: bool,
    pub split_seed: u64,
    pub levels: Vec<LevelEntry>,
}

/// `ingest/corpus.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusSummary {
    pub games: Vec<GameSummary>,
}

impl CorpusSummary {
    pub fn build(games: &[GameData], split_seed: u64) -> CliResult<Self> {
        let mut out = Vec::new();
        for g in games {
            let seed = split_seed ^ cte_core::io::fnv1a64(g.name.as_bytes());
            let ids: Vec<String> = g.levels.iter().map(|l| l.id.clone()).collect();
            let split = split_levels(&ids, seed)?;
            let which = |id: &String| {
                if split.validation.contains(id) {
                    Split::Validation
                } else if split.test.contains(id) {
                    Split::Test
                } else {
                    Split::Train
                }
            };
            out.push(GameSummary {
                name: g.name.clone(),
                annotated: g.affordances.is_annotated(),
                has_images: g.has_images(),
                has_roles: g.roles.is_some(),
                split_seed: seed,
                levels: g.levels.iter().map(|l| LevelEntry { id: l.id.clone(), rows: l.grid.rows(), cols: l.grid.cols(), split: which(&l.id) }).collect(),
            });
        }
        Ok(Self { games: out })
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    pub fn game(&self, name: &str) -> Option<&GameSummary> {
        self.games.iter().find(|g| g.name == name)
    }

    /// Ids of `game`'s levels in `split`, in corpus order.
    pub fn ids(&self, game: &str, split: Split) -> Vec<&str> {
        self.game(game).map(|g| g.levels.iter().filter(|l| l.split == split).map(|l| l.id.as_str()).collect()).unwrap_or_default()
    }
}
