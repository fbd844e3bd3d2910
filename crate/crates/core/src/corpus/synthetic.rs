//! Procedurally constructed fixture games.
//!
//! Eight small games with hand-designed sprites, affordance annotations and
//! tile roles. They let the whole pipeline run without copyrighted assets.
//! Everything is a pure function of the game's seed.

use super::affordance::AffordanceMap;
use super::image::{LevelImage, Patch, Tileset, PATCH_BYTES, TILE};
use super::level::{LevelGrid, TileSymbol};
use crate::error::Result;
use crate::io::write_atomic;
use crate::metrics::roles::{strategy_map_costs, TileRoleMap};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;

type Rgb = [u8; 3];

/// Drawing recipe for one 16x16 sprite.
#[derive(Clone, Copy, Debug)]
pub enum Sprite {
    Flat(Rgb),
    Brick { mortar: Rgb, brick: Rgb },
    Block { edge: Rgb, fill: Rgb },
    Dots { bg: Rgb, fg: Rgb },
    Disc { bg: Rgb, fg: Rgb },
    Critter { bg: Rgb, body: Rgb, eye: Rgb },
    Ladder { bg: Rgb, fg: Rgb },
    Rope { bg: Rgb, fg: Rgb },
    Spikes { bg: Rgb, fg: Rgb },
    Waves { bg: Rgb, fg: Rgb },
    Stripes { a: Rgb, b: Rgb },
    PipeLeft { bg: Rgb, body: Rgb, rim: bool },
    PipeRight { bg: Rgb, body: Rgb, rim: bool },
    Cross { bg: Rgb, fg: Rgb },
    Triangle { bg: Rgb, fg: Rgb },
    Stair { bg: Rgb, fg: Rgb },
    Door { frame: Rgb, fill: Rgb },
    Checker { a: Rgb, b: Rgb },
}

impl Sprite {
    pub fn draw(&self) -> Patch {
        let mut p = [0u8; PATCH_BYTES];
        for y in 0..TILE {
            for x in 0..TILE {
                let c = self.pixel(y, x);
                p[(y * TILE + x) * 3..(y * TILE + x) * 3 + 3].copy_from_slice(&c);
            }
        }
        p
    }

    fn pixel(&self, y: usize, x: usize) -> Rgb {
        let (fy, fx) = (y as f64 - 7.5, x as f64 - 7.5);
        let r2 = fy * fy + fx * fx;
        match *self {
            Sprite::Flat(c) => c,
            Sprite::Brick { mortar, brick } => {
                let offset = if (y / 4) % 2 == 0 { 0 } else { 4 };
                if y % 4 == 3 || (x + offset) % 8 == 7 {
                    mortar
                } else {
                    brick
                }
            }
            Sprite::Block { edge, fill } => {
                if x == 0 || y == 0 || x == 15 || y == 15 || (x == y) || (x + y == 15) {
                    edge
                } else {
                    fill
                }
            }
            Sprite::Dots { bg, fg } => {
                if (x % 5 == 2) && (y % 5 == 2) {
                    fg
                } else {
                    bg
                }
            }
            Sprite::Disc { bg, fg } => {
                if r2 < 20.0 {
                    fg
                } else {
                    bg
                }
            }
            Sprite::Critter { bg, body, eye } => {
                if (y == 6 && (x == 5 || x == 10)) || (y == 7 && (x == 5 || x == 10)) {
                    eye
                } else if y >= 3 && r2 < 42.0 {
                    body
                } else {
                    bg
                }
            }
            Sprite::Ladder { bg, fg } => {
                if x == 3 || x == 12 || (y % 4 == 1 && (3..=12).contains(&x)) {
                    fg
                } else {
                    bg
                }
            }
            Sprite::Rope { bg, fg } => {
                if y == 2 || y == 3 {
                    fg
                } else {
                    bg
                }
            }
            Sprite::Spikes { bg, fg } => {
                let tooth = x % 4;
                let h = if tooth < 2 { tooth + 1 } else { 4 - tooth };
                if 15 - y < h * 4 {
                    fg
                } else {
                    bg
                }
            }
            Sprite::Waves { bg, fg } => {
                let wave = ((x as f64 * 0.8).sin() * 1.5 + 1.5) as usize;
                if (y + wave) % 6 == 0 {
                    fg
                } else {
                    bg
                }
            }
            Sprite::Stripes { a, b } => {
                if (y / 2) % 2 == 0 {
                    a
                } else {
                    b
                }
            }
            Sprite::PipeLeft { bg, body, rim } => {
                if rim && y < 6 {
                    if x == 0 || y == 0 || y == 5 {
                        [0, 40, 0]
                    } else {
                        body
                    }
                } else if x < 2 {
                    bg
                } else if x == 2 || x == 6 {
                    [0, 40, 0]
                } else {
                    body
                }
            }
            Sprite::PipeRight { bg, body, rim } => {
                if rim && y < 6 {
                    if x == 15 || y == 0 || y == 5 {
                        [0, 40, 0]
                    } else {
                        body
                    }
                } else if x > 13 {
                    bg
                } else if x == 13 || x == 9 {
                    [0, 40, 0]
                } else {
                    body
                }
            }
            Sprite::Cross { bg, fg } => {
                if (6..=9).contains(&x) || (6..=9).contains(&y) {
                    fg
                } else {
                    bg
                }
            }
            Sprite::Triangle { bg, fg } => {
                let half = (15 - y) / 2;
                if y >= 2 && x >= 7usize.saturating_sub(7 - half.min(7)) && x <= 8 + (7 - half.min(7)) {
                    fg
                } else {
                    bg
                }
            }
            Sprite::Stair { bg, fg } => {
                if x + y >= 15 {
                    fg
                } else {
                    bg
                }
            }
            Sprite::Door { frame, fill } => {
                if x < 2 || x > 13 || y < 2 {
                    frame
                } else if x == 11 && y == 9 {
                    [250, 220, 60]
                } else {
                    fill
                }
            }
            Sprite::Checker { a, b } => {
                if ((y / 4) + (x / 4)) % 2 == 0 {
                    a
                } else {
                    b
                }
            }
        }
    }
}

/// Static description of one fixture game.
#[derive(Clone, Debug)]
pub struct TileDef {
    pub symbol: TileSymbol,
    pub sprite: Sprite,
    pub affordances: &'static [&'static str],
}

/// The ordered affordance labels used by the annotated fixture games.
pub const AFFORDANCE_NAMES: [&str; 13] = [
    "solid",
    "passable",
    "climbable",
    "collectable",
    "hazard",
    "breakable",
    "moving",
    "portal",
    "pipe",
    "openable",
    "empty",
    "wall",
    "element",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum FixtureKind {
    Platformer,
    Runner,
    Dungeon,
    Blaster,
    Climber,
    Castle,
    Warlord,
    Cavern,
}

/// A generated fixture game: tiles, roles and levels.
#[derive(Clone, Debug)]
pub struct FixtureGame {
    pub name: String,
    pub kind: FixtureKind,
    pub annotated: bool,
    pub tiles: Vec<TileDef>,
    pub roles: TileRoleMap,
    pub levels: Vec<(String, LevelGrid)>,
}

/// On-disk game description written next to the levels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GameManifest {
    pub name: String,
    pub annotated: bool,
    /// Symbols of `tileset.png`, left to right.
    pub tileset_symbols: String,
    pub levels: Vec<String>,
}

const SKY: Rgb = [120, 170, 250];

fn t(symbol: TileSymbol, sprite: Sprite, affordances: &'static [&'static str]) -> TileDef {
    TileDef { symbol, sprite, affordances }
}

fn set(s: &str) -> std::collections::BTreeSet<TileSymbol> {
    s.chars().collect()
}

impl FixtureGame {
    pub fn tileset(&self) -> Tileset {
        let mut ts = Tileset::new();
        for d in &self.tiles {
            ts.insert(d.symbol, d.sprite.draw()).expect("fixture sprites are distinct");
        }
        ts
    }

    pub fn affordance_map(&self) -> AffordanceMap {
        if !self.annotated {
            return AffordanceMap::unannotated(&self.name);
        }
        let tiles: BTreeMap<TileSymbol, Vec<String>> =
            self.tiles.iter().map(|d| (d.symbol, d.affordances.iter().map(|s| s.to_string()).collect())).collect();
        AffordanceMap::from_named(&self.name, AFFORDANCE_NAMES.iter().map(|s| s.to_string()).collect(), &tiles)
            .expect("fixture affordances use known names")
    }

    pub fn affordance_json(&self) -> String {
        let tiles: BTreeMap<String, Vec<&str>> = self.tiles.iter().map(|d| (d.symbol.to_string(), d.affordances.to_vec())).collect();
        serde_json::to_string_pretty(&serde_json::json!({ "affordances": AFFORDANCE_NAMES, "tiles": tiles })).expect("json")
    }

    pub fn render(&self, level: &LevelGrid) -> Result<LevelImage> {
        let sprites: BTreeMap<TileSymbol, Patch> = self.tiles.iter().map(|d| (d.symbol, d.sprite.draw())).collect();
        LevelImage::from_tiles(level.rows(), level.cols(), |r, c| &sprites[&level.get(r, c)])
    }

    /// Writes `levels/*.txt`, `images/*.png`, `tileset.png`, `roles.json`,
    /// `game.json` and, for annotated games, `affordances.json`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        for (id, level) in &self.levels {
            write_atomic(&dir.join("levels").join(format!("{id}.txt")), level.to_vglc_string().as_bytes())?;
            self.render(level)?.save_png(&dir.join("images").join(format!("{id}.png")))?;
        }
        let sprites: Vec<Patch> = self.tiles.iter().map(|d| d.sprite.draw()).collect();
        LevelImage::from_tiles(1, sprites.len(), |_, c| &sprites[c])?.save_png(&dir.join("tileset.png"))?;
        write_atomic(&dir.join("roles.json"), self.roles.to_json().as_bytes())?;
        if self.annotated {
            write_atomic(&dir.join("affordances.json"), self.affordance_json().as_bytes())?;
        }
        let manifest = GameManifest {
            name: self.name.clone(),
            annotated: self.annotated,
            tileset_symbols: self.tiles.iter().map(|d| d.symbol).collect(),
            levels: self.levels.iter().map(|(id, _)| id.clone()).collect(),
        };
        write_atomic(&dir.join("game.json"), serde_json::to_string_pretty(&manifest)?.as_bytes())?;
        Ok(())
    }
}

/// All eight fixture games.
pub fn fixture_games() -> Vec<FixtureGame> {
    [
        FixtureKind::Platformer,
        FixtureKind::Runner,
        FixtureKind::Dungeon,
        FixtureKind::Blaster,
        FixtureKind::Climber,
        FixtureKind::Castle,
        FixtureKind::Warlord,
        FixtureKind::Cavern,
    ]
    .into_iter()
    .map(fixture_game)
    .collect()
}

/// Writes every fixture game under `dir/<name>/`.
pub fn write_fixture_corpus(dir: &Path) -> Result<()> {
    for g in fixture_games() {
        g.write(&dir.join(&g.name))?;
    }
    Ok(())
}

pub fn fixture_game(kind: FixtureKind) -> FixtureGame {
    let (name, seed, count) = match kind {
        FixtureKind::Platformer => ("platformer", 101, 16),
        FixtureKind::Runner => ("runner", 202, 10),
        FixtureKind::Dungeon => ("dungeon", 303, 10),
        FixtureKind::Blaster => ("blaster", 404, 8),
        FixtureKind::Climber => ("climber", 505, 8),
        FixtureKind::Castle => ("castle", 606, 10),
        FixtureKind::Warlord => ("warlord", 707, 12),
        FixtureKind::Cavern => ("cavern", 808, 8),
    };
    let (tiles, roles, annotated) = tiles_and_roles(kind, name);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let levels = (0..count)
        .map(|i| {
            let g = match kind {
                FixtureKind::Platformer => platformer_level(&mut rng, 12, 64, &PLATFORMER_SYMBOLS),
                FixtureKind::Cavern => platformer_level(&mut rng, 12, 40, &CAVERN_SYMBOLS),
                FixtureKind::Runner => runner_level(&mut rng),
                FixtureKind::Dungeon => dungeon_level(&mut rng),
                FixtureKind::Blaster => blaster_level(&mut rng),
                FixtureKind::Climber => climber_level(&mut rng),
                FixtureKind::Castle => castle_level(&mut rng),
                FixtureKind::Warlord => warlord_level(&mut rng),
            };
            (format!("{name}-{i:02}"), g)
        })
        .collect();
    FixtureGame { name: name.to_string(), kind, annotated, tiles, roles, levels }
}

fn tiles_and_roles(kind: FixtureKind, name: &str) -> (Vec<TileDef>, TileRoleMap, bool) {
    let mut roles = TileRoleMap { game: name.to_string(), gap_rows: 2, ..Default::default() };
    let annotated = !matches!(kind, FixtureKind::Castle | FixtureKind::Warlord);
    let tiles = match kind {
        FixtureKind::Platformer => {
            roles.solids = set("XS?Q<>[]");
            roles.rewards = set("?o");
            roles.enemies = set("E");
            roles.interesting = set("S?Qo<>[]E");
            vec![
                t('-', Sprite::Flat(SKY), &["passable", "empty"]),
                t('X', Sprite::Brick { mortar: [60, 30, 10], brick: [180, 90, 40] }, &["solid"]),
                t('S', Sprite::Brick { mortar: [40, 20, 0], brick: [220, 120, 60] }, &["solid", "breakable"]),
                t('?', Sprite::Block { edge: [120, 60, 0], fill: [250, 200, 40] }, &["solid", "collectable", "openable"]),
                t('Q', Sprite::Block { edge: [50, 30, 10], fill: [140, 100, 60] }, &["solid"]),
                t('E', Sprite::Critter { bg: SKY, body: [150, 60, 20], eye: [255, 255, 255] }, &["hazard", "moving"]),
                t('o', Sprite::Disc { bg: SKY, fg: [250, 210, 0] }, &["passable", "collectable"]),
                t('<', Sprite::PipeLeft { bg: SKY, body: [40, 180, 40], rim: true }, &["solid", "pipe"]),
                t('>', Sprite::PipeRight { bg: SKY, body: [40, 180, 40], rim: true }, &["solid", "pipe"]),
                t('[', Sprite::PipeLeft { bg: SKY, body: [30, 150, 30], rim: false }, &["solid", "pipe"]),
                t(']', Sprite::PipeRight { bg: SKY, body: [30, 150, 30], rim: false }, &["solid", "pipe"]),
            ]
        }
        FixtureKind::Cavern => {
            let bg = [25, 20, 35];
            roles.solids = set("=#");
            roles.rewards = set("*");
            roles.enemies = set("x");
            roles.interesting = set("#*x^");
            vec![
                t('.', Sprite::Flat(bg), &["passable", "empty"]),
                t('=', Sprite::Brick { mortar: [30, 30, 30], brick: [100, 100, 110] }, &["solid"]),
                t('#', Sprite::Block { edge: [20, 60, 90], fill: [60, 140, 180] }, &["solid", "breakable"]),
                t('*', Sprite::Disc { bg, fg: [200, 40, 200] }, &["passable", "collectable"]),
                t('x', Sprite::Critter { bg, body: [90, 90, 90], eye: [255, 0, 0] }, &["hazard", "moving"]),
                t('^', Sprite::Spikes { bg, fg: [200, 200, 200] }, &["hazard"]),
            ]
        }
        FixtureKind::Runner => {
            roles.solids = set("bB");
            roles.rewards = set("G");
            roles.enemies = set("E");
            roles.interesting = set("#-GEM");
            let bg = [0, 0, 0];
            vec![
                t('.', Sprite::Flat(bg), &["passable", "empty"]),
                t('b', Sprite::Brick { mortar: [90, 40, 20], brick: [200, 90, 50] }, &["solid", "breakable"]),
                t('B', Sprite::Flat([150, 150, 160]), &["solid"]),
                t('#', Sprite::Ladder { bg, fg: [230, 230, 230] }, &["climbable", "passable"]),
                t('-', Sprite::Rope { bg, fg: [230, 230, 230] }, &["climbable", "passable"]),
                t('G', Sprite::Disc { bg, fg: [255, 215, 0] }, &["collectable", "passable"]),
                t('E', Sprite::Critter { bg, body: [220, 40, 40], eye: [255, 255, 255] }, &["hazard", "moving"]),
                t('M', Sprite::Critter { bg, body: [40, 120, 240], eye: [255, 255, 255] }, &["element", "moving"]),
            ]
        }
        FixtureKind::Dungeon => {
            roles.solids = set("WB");
            roles.enemies = set("M");
            roles.rewards = set("S");
            roles.interesting = set("BDMPS");
            let floor = [200, 180, 120];
            vec![
                t('F', Sprite::Flat(floor), &["passable", "empty"]),
                t('W', Sprite::Brick { mortar: [20, 60, 60], brick: [40, 110, 110] }, &["solid", "wall"]),
                t('B', Sprite::Block { edge: [60, 60, 40], fill: [130, 120, 80] }, &["solid"]),
                t('D', Sprite::Door { frame: [40, 110, 110], fill: [10, 10, 10] }, &["portal", "openable"]),
                t('M', Sprite::Critter { bg: floor, body: [170, 30, 30], eye: [255, 255, 0] }, &["hazard", "moving"]),
                t('P', Sprite::Waves { bg: [30, 80, 200], fg: [140, 190, 255] }, &["hazard"]),
                t('S', Sprite::Stair { bg: floor, fg: [90, 70, 50] }, &["portal"]),
            ]
        }
        FixtureKind::Blaster => {
            roles.solids = set("#CM");
            roles.enemies = set("HC");
            roles.rewards = set("*");
            roles.interesting = set("HC|M*D");
            let bg = [20, 30, 60];
            vec![
                t('-', Sprite::Flat(bg), &["passable", "empty"]),
                t('#', Sprite::Block { edge: [80, 80, 100], fill: [150, 150, 180] }, &["solid"]),
                t('H', Sprite::Spikes { bg, fg: [230, 230, 240] }, &["hazard"]),
                t('C', Sprite::Cross { bg: [90, 90, 100], fg: [220, 60, 20] }, &["solid", "hazard"]),
                t('|', Sprite::Ladder { bg, fg: [200, 160, 60] }, &["climbable", "passable"]),
                t('M', Sprite::Stripes { a: [200, 100, 30], b: [120, 60, 20] }, &["solid", "moving"]),
                t('*', Sprite::Disc { bg, fg: [60, 220, 240] }, &["collectable", "passable"]),
                t('D', Sprite::Door { frame: [80, 80, 100], fill: [200, 40, 40] }, &["portal", "solid"]),
            ]
        }
        FixtureKind::Climber => {
            roles.solids = set("#TM");
            roles.platforms = set("#T");
            roles.enemies = set("H");
            roles.interesting = set("HDM");
            let bg = [10, 10, 10];
            vec![
                t('-', Sprite::Flat(bg), &["passable", "empty"]),
                t('#', Sprite::Brick { mortar: [30, 60, 30], brick: [70, 150, 70] }, &["solid", "wall"]),
                t('T', Sprite::Stripes { a: [200, 200, 160], b: bg }, &["solid", "passable"]),
                t('H', Sprite::Spikes { bg, fg: [250, 80, 80] }, &["hazard"]),
                t('D', Sprite::Door { frame: [100, 60, 20], fill: [50, 30, 10] }, &["portal"]),
                t('M', Sprite::Stripes { a: [90, 200, 250], b: [30, 90, 120] }, &["solid", "moving"]),
            ]
        }
        FixtureKind::Castle => {
            roles.solids = set("F/P");
            roles.enemies = set("E");
            roles.rewards = set("cgskw");
            roles.interesting = set("cgskw");
            let bg = [70, 40, 90];
            vec![
                t('b', Sprite::Brick { mortar: [50, 25, 70], brick: [80, 50, 100] }, &[]),
                t('F', Sprite::Block { edge: [200, 170, 80], fill: [160, 130, 60] }, &[]),
                t('/', Sprite::Stair { bg, fg: [200, 170, 80] }, &[]),
                t('D', Sprite::Door { frame: [200, 170, 80], fill: [30, 20, 40] }, &[]),
                t('P', Sprite::PipeLeft { bg, body: [60, 160, 200], rim: false }, &[]),
                t('c', Sprite::Triangle { bg, fg: [250, 140, 20] }, &[]),
                t('g', Sprite::Disc { bg, fg: [220, 30, 30] }, &[]),
                t('s', Sprite::Block { edge: [20, 20, 20], fill: [90, 90, 90] }, &[]),
                t('k', Sprite::Checker { a: [150, 100, 50], b: [110, 70, 30] }, &[]),
                t('w', Sprite::Dots { bg: [40, 40, 40], fg: [200, 200, 200] }, &[]),
                t('E', Sprite::Critter { bg, body: [250, 250, 250], eye: [0, 0, 0] }, &[]),
            ]
        }
        FixtureKind::Warlord => {
            roles.interesting = set("FMTC");
            roles.movement_costs = strategy_map_costs('L', 'F', 'T', 'M', 'C', 'D', 'R');
            let land = [90, 170, 70];
            vec![
                t('L', Sprite::Flat(land), &[]),
                t('F', Sprite::Dots { bg: land, fg: [20, 90, 30] }, &[]),
                t('M', Sprite::Triangle { bg: land, fg: [130, 110, 90] }, &[]),
                t('D', Sprite::Dots { bg: [220, 200, 130], fg: [190, 170, 100] }, &[]),
                t('R', Sprite::Waves { bg: [60, 110, 220], fg: [150, 190, 250] }, &[]),
                t('T', Sprite::Cross { bg: land, fg: [200, 60, 60] }, &[]),
                t('C', Sprite::Door { frame: [120, 120, 120], fill: [60, 60, 60] }, &[]),
            ]
        }
    };
    (tiles, roles, annotated)
}

struct PlatformerSymbols {
    sky: char,
    ground: char,
    brick: char,
    question: Option<char>,
    used: Option<char>,
    enemy: char,
    coin: char,
    pipe: Option<[char; 4]>,
    hazard: Option<char>,
}

const PLATFORMER_SYMBOLS: PlatformerSymbols = PlatformerSymbols {
    sky: '-',
    ground: 'X',
    brick: 'S',
    question: Some('?'),
    used: Some('Q'),
    enemy: 'E',
    coin: 'o',
    pipe: Some(['<', '>', '[', ']']),
    hazard: None,
};

const CAVERN_SYMBOLS: PlatformerSymbols = PlatformerSymbols {
    sky: '.',
    ground: '=',
    brick: '#',
    question: None,
    used: None,
    enemy: 'x',
    coin: '*',
    pipe: None,
    hazard: Some('^'),
};

/// Side-scrolling level: two ground rows with short gaps, pipes, floating
/// platforms with rewards, enemies on the ground and a closing staircase.
fn platformer_level(rng: &mut ChaCha8Rng, rows: usize, cols: usize, s: &PlatformerSymbols) -> LevelGrid {
    let mut g = LevelGrid::filled(rows, cols, s.sky).expect("non-empty");
    let ground_top = rows - 2;
    let mut gap = vec![false; cols];
    let mut c = 5;
    while c < cols - 10 {
        if rng.gen_bool(0.22) {
            let w = rng.gen_range(1..=3);
            for cc in c..c + w {
                gap[cc] = true;
            }
            c += w + 5;
        } else {
            c += 1;
        }
    }
    for col in 0..cols {
        if !gap[col] {
            g.set(ground_top, col, s.ground);
            g.set(rows - 1, col, s.ground);
        } else if let Some(h) = s.hazard {
            g.set(rows - 1, col, h);
        }
    }
    // Pipes stand on solid ground away from gaps.
    if let Some([tl, tr, bl, br]) = s.pipe {
        let mut col = 8;
        while col < cols - 12 {
            if rng.gen_bool(0.12) && !gap[col - 1] && !gap[col] && !gap[col + 1] && !gap[col + 2] {
                let h = rng.gen_range(2..=3);
                let top = ground_top - h;
                g.set(top, col, tl);
                g.set(top, col + 1, tr);
                for r in top + 1..ground_top {
                    g.set(r, col, bl);
                    g.set(r, col + 1, br);
                }
                col += 6;
            } else {
                col += 1;
            }
        }
    }
    // Floating platforms, occasionally with coins on top.
    let mut col = 4;
    while col < cols - 12 {
        if rng.gen_bool(0.18) {
            let row = if rng.gen_bool(0.5) { ground_top - 4 } else { ground_top - 5 };
            let len = rng.gen_range(2..=5);
            for cc in col..col + len {
                let sym = match (s.question, s.used) {
                    (Some(q), _) if rng.gen_bool(0.25) => q,
                    (_, Some(u)) if rng.gen_bool(0.05) => u,
                    _ => s.brick,
                };
                if g.get(row, cc) == s.sky && g.get(row + 1, cc) == s.sky {
                    g.set(row, cc, sym);
                }
            }
            if rng.gen_bool(0.4) {
                for cc in col..col + len {
                    if g.get(row - 1, cc) == s.sky {
                        g.set(row - 1, cc, s.coin);
                    }
                }
            }
            col += len + 4;
        } else {
            col += 1;
        }
    }
    // Enemies walk on the ground.
    for col in 6..cols - 10 {
        if !gap[col] && g.get(ground_top - 1, col) == s.sky && rng.gen_bool(0.06) {
            g.set(ground_top - 1, col, s.enemy);
        }
    }
    // Staircase near the end.
    let start = cols - 8;
    for (i, col) in (start..start + 4).enumerate() {
        for r in (ground_top - 1 - i)..ground_top {
            g.set(r, col, s.ground);
        }
        g.set(ground_top, col, s.ground);
        g.set(rows - 1, col, s.ground);
    }
    for col in start + 4..cols {
        g.set(ground_top, col, s.ground);
        g.set(rows - 1, col, s.ground);
    }
    g
}

fn runner_level(rng: &mut ChaCha8Rng) -> LevelGrid {
    let (rows, cols) = (12, 28);
    let mut g = LevelGrid::filled(rows, cols, '.').expect("non-empty");
    for c in 0..cols {
        g.set(rows - 1, c, 'B');
    }
    let floors = [3usize, 6, 9];
    for &r in &floors {
        let mut c = 0;
        while c < cols {
            if rng.gen_bool(0.12) {
                c += rng.gen_range(1..=2);
            } else {
                g.set(r, c, if rng.gen_bool(0.85) { 'b' } else { 'B' });
                c += 1;
            }
        }
    }
    // Ladders from each floor down to the next surface.
    for (i, &r) in floors.iter().enumerate() {
        let below = floors.get(i + 1).copied().unwrap_or(rows - 1);
        for _ in 0..rng.gen_range(1..=2) {
            let c = rng.gen_range(1..cols - 1);
            for rr in r..below {
                g.set(rr, c, '#');
            }
        }
    }
    // Ropes hang in the open rows.
    for &r in &[1usize, 4, 7] {
        if rng.gen_bool(0.6) {
            let start = rng.gen_range(2..cols - 10);
            for c in start..start + rng.gen_range(4..9) {
                if g.get(r, c) == '.' {
                    g.set(r, c, '-');
                }
            }
        }
    }
    for &r in &floors {
        for c in 0..cols {
            if g.get(r, c) != '.' && g.get(r - 1, c) == '.' {
                let roll: f64 = rng.gen();
                if roll < 0.07 {
                    g.set(r - 1, c, 'G');
                } else if roll < 0.10 {
                    g.set(r - 1, c, 'E');
                }
            }
        }
    }
    let c = rng.gen_range(0..cols);
    if g.get(rows - 2, c) == '.' {
        g.set(rows - 2, c, 'M');
    }
    g
}

fn dungeon_level(rng: &mut ChaCha8Rng) -> LevelGrid {
    let (rows, cols) = (11, 16);
    let mut g = LevelGrid::filled(rows, cols, 'F').expect("non-empty");
    for r in 0..rows {
        for c in 0..cols {
            if r < 2 || r >= rows - 2 || c < 2 || c >= cols - 2 {
                g.set(r, c, 'W');
            }
        }
    }
    let mid_r = rows / 2;
    let mid_c = cols / 2;
    if rng.gen_bool(0.7) {
        g.set(0, mid_c, 'D');
        g.set(1, mid_c, 'D');
    }
    if rng.gen_bool(0.7) {
        g.set(rows - 1, mid_c, 'D');
        g.set(rows - 2, mid_c, 'D');
    }
    if rng.gen_bool(0.5) {
        g.set(mid_r, 0, 'D');
        g.set(mid_r, 1, 'D');
    }
    if rng.gen_bool(0.5) {
        g.set(mid_r, cols - 1, 'D');
        g.set(mid_r, cols - 2, 'D');
    }
    match rng.gen_range(0..3) {
        0 => {
            for &(r, c) in &[(3, 4), (3, 11), (7, 4), (7, 11)] {
                g.set(r, c, 'B');
            }
        }
        1 => {
            for c in 4..12 {
                g.set(mid_r, c, 'P');
            }
        }
        _ => {
            for r in 3..8 {
                g.set(r, 5, 'B');
                g.set(r, 10, 'B');
            }
        }
    }
    for _ in 0..rng.gen_range(1..=4) {
        let (r, c) = (rng.gen_range(2..rows - 2), rng.gen_range(2..cols - 2));
        if g.get(r, c) == 'F' {
            g.set(r, c, 'M');
        }
    }
    if rng.gen_bool(0.3) {
        g.set(3, 3, 'S');
    }
    g
}

fn blaster_level(rng: &mut ChaCha8Rng) -> LevelGrid {
    let (rows, cols) = (12, 40);
    let mut g = LevelGrid::filled(rows, cols, '-').expect("non-empty");
    let mut c = 0;
    while c < cols {
        if c > 4 && c < cols - 6 && rng.gen_bool(0.1) {
            let w = rng.gen_range(2..=3);
            for cc in c..(c + w).min(cols) {
                g.set(rows - 1, cc, 'H');
            }
            if rng.gen_bool(0.5) {
                g.set(rows - 5, c, 'M');
                g.set(rows - 5, c + 1, 'M');
            }
            c += w;
        } else {
            g.set(rows - 1, c, '#');
            g.set(rows - 2, c, '#');
            c += 1;
        }
    }
    let mut c = 3;
    while c < cols - 8 {
        if rng.gen_bool(0.15) {
            let r = rng.gen_range(3..=6);
            let len = rng.gen_range(3..=6);
            for cc in c..c + len {
                g.set(r, cc, '#');
            }
            let lc = c + rng.gen_range(0..len);
            for rr in r + 1..rows - 2 {
                if g.get(rr, lc) == '-' {
                    g.set(rr, lc, '|');
                }
            }
            if rng.gen_bool(0.5) {
                g.set(r - 1, c + len - 1, '*');
            }
            c += len + 3;
        } else {
            c += 1;
        }
    }
    for c in 0..cols {
        if g.get(rows - 2, c) == '#' && g.get(rows - 3, c) == '-' && rng.gen_bool(0.05) {
            g.set(rows - 3, c, 'C');
        }
    }
    g.set(rows - 3, cols - 1, 'D');
    g.set(rows - 4, cols - 1, 'D');
    g
}

fn climber_level(rng: &mut ChaCha8Rng) -> LevelGrid {
    let (rows, cols) = (24, 16);
    let mut g = LevelGrid::filled(rows, cols, '-').expect("non-empty");
    for r in 0..rows {
        g.set(r, 0, '#');
        g.set(r, cols - 1, '#');
    }
    for c in 0..cols {
        g.set(rows - 1, c, '#');
    }
    for r in (3..rows - 2).step_by(4) {
        let mut c = 1;
        while c < cols - 1 {
            if rng.gen_bool(0.25) {
                c += rng.gen_range(2..=3);
            } else {
                let sym = if rng.gen_bool(0.1) { 'M' } else { 'T' };
                g.set(r, c, sym);
                c += 1;
            }
        }
        if rng.gen_bool(0.4) {
            let c = rng.gen_range(1..cols - 1);
            if g.get(r, c) != '-' && g.get(r - 1, c) == '-' {
                g.set(r - 1, c, 'H');
            }
        }
    }
    let c = rng.gen_range(2..cols - 2);
    g.set(2, c, 'D');
    g
}

fn castle_level(rng: &mut ChaCha8Rng) -> LevelGrid {
    let (rows, cols) = (12, 32);
    let mut g = LevelGrid::filled(rows, cols, 'b').expect("non-empty");
    let floors = [3usize, 7, 11];
    for &r in &floors {
        for c in 0..cols {
            g.set(r, c, 'F');
        }
    }
    for (i, &r) in floors.iter().enumerate().skip(1) {
        let upper = floors[i - 1];
        let start = rng.gen_range(2..cols - 6);
        for step in 0..(r - upper) {
            let c = start + step;
            g.set(r - 1 - step, c, '/');
        }
    }
    for &r in &floors[..2] {
        if rng.gen_bool(0.6) {
            let c = rng.gen_range(1..cols - 1);
            g.set(r - 1, c, 'D');
        }
    }
    if rng.gen_bool(0.5) {
        let c = rng.gen_range(1..cols - 1);
        for r in 4..7 {
            if g.get(r, c) == 'b' {
                g.set(r, c, 'P');
            }
        }
    }
    let items = ['c', 'c', 'c', 'g', 's', 'k', 'w'];
    for &r in &floors {
        for c in 0..cols {
            if r > 0 && g.get(r - 1, c) == 'b' {
                let roll: f64 = rng.gen();
                if roll < 0.08 {
                    g.set(r - 1, c, items[rng.gen_range(0..items.len())]);
                } else if roll < 0.11 {
                    g.set(r - 1, c, 'E');
                }
            }
        }
    }
    g
}

fn warlord_level(rng: &mut ChaCha8Rng) -> LevelGrid {
    let (rows, cols) = (12, 16);
    let mut g = LevelGrid::filled(rows, cols, 'L').expect("non-empty");
    let blob = |g: &mut LevelGrid, rng: &mut ChaCha8Rng, sym: char, size: usize| {
        let (mut r, mut c) = (rng.gen_range(0..rows), rng.gen_range(0..cols));
        for _ in 0..size {
            if g.get(r, c) == 'L' {
                g.set(r, c, sym);
            }
            match rng.gen_range(0..4) {
                0 if r > 0 => r -= 1,
                1 if r + 1 < rows => r += 1,
                2 if c > 0 => c -= 1,
                3 if c + 1 < cols => c += 1,
                _ => {}
            }
        }
    };
    // A river crosses the map top to bottom.
    let mut c = rng.gen_range(3..cols - 3);
    for r in 0..rows {
        g.set(r, c, 'R');
        let step: i32 = rng.gen_range(-1..=1);
        c = (c as i32 + step).clamp(1, cols as i32 - 2) as usize;
    }
    for _ in 0..2 {
        let n = rng.gen_range(6..14);
        blob(&mut g, rng, 'F', n);
        let n = rng.gen_range(5..12);
        blob(&mut g, rng, 'M', n);
    }
    let n = rng.gen_range(4..10);
        blob(&mut g, rng, 'D', n);
    for sym in ['T', 'C'] {
        loop {
            let (r, c) = (rng.gen_range(0..rows), rng.gen_range(0..cols));
            if g.get(r, c) == 'L' {
                g.set(r, c, sym);
                break;
            }
        }
    }
    g
}
