//! Tile-level A* playability check for side-scrolling levels.
//!
//! States are standable cells: non-solid with a solid cell directly below.
//! Each search edge is a whole manoeuvre (walk, or jump arc) that ends with a
//! fall onto the next standable cell, so airborne phases never appear as
//! search states. Enemies and hazards are ignored.

use crate::corpus::LevelGrid;
use crate::metrics::roles::TileRoleMap;
use serde::{Deserialize, Serialize};
use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhysicsConfig {
    /// Tiles the player can rise above its standing row.
    pub max_jump_height: usize,
    /// Widest gap, in tiles, that a jump clears.
    pub max_jump_span: usize,
}

impl Default for PhysicsConfig {
    fn default() -> Self {
        Self { max_jump_height: 4, max_jump_span: 4 }
    }
}

/// `true` where the symbol is solid.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SolidityGrid {
    pub rows: usize,
    pub cols: usize,
    pub cells: Vec<bool>,
}

impl SolidityGrid {
    pub fn solid(&self, r: usize, c: usize) -> bool {
        self.cells[r * self.cols + c]
    }

    pub fn standable(&self, r: usize, c: usize) -> bool {
        r + 1 < self.rows && !self.solid(r, c) && self.solid(r + 1, c)
    }

    /// First standable cell at or below `(r, c)` reached by falling.
    fn land(&self, mut r: usize, c: usize) -> Option<usize> {
        loop {
            if self.solid(r, c) {
                return None;
            }
            if self.standable(r, c) {
                return Some(r);
            }
            r += 1;
            if r >= self.rows {
                return None;
            }
        }
    }

    /// Every `(row, col, cost)` reachable from a standable cell in one manoeuvre.
    pub fn successors(&self, r: usize, c: usize, physics: &PhysicsConfig) -> Vec<(usize, usize, u32)> {
        let mut out = Vec::new();
        for dir in [1isize, -1] {
            let step = |k: usize| -> Option<usize> {
                let nc = c as isize + dir * k as isize;
                (0..self.cols as isize).contains(&nc).then_some(nc as usize)
            };
            if let Some(nc) = step(1) {
                if let Some(nr) = self.land(r, nc) {
                    out.push((nr, nc, 1));
                }
            }
            for h in 1..=physics.max_jump_height {
                if h > r || self.solid(r - h, c) {
                    break;
                }
                let apex = r - h;
                for d in 1..=physics.max_jump_span + 1 {
                    let Some(nc) = step(d) else { break };
                    if self.solid(apex, nc) {
                        break;
                    }
                    if let Some(nr) = self.land(apex, nc) {
                        out.push((nr, nc, d as u32));
                    }
                }
            }
        }
        out.sort_unstable_by_key(|&(nr, nc, cost)| (cost, Reverse(nc), Reverse(nr)));
        out.dedup_by_key(|s| (s.0, s.1));
        out
    }
}

pub fn solidity_grid(level: &LevelGrid, roles: &TileRoleMap) -> SolidityGrid {
    SolidityGrid { rows: level.rows(), cols: level.cols(), cells: level.cells().iter().map(|&s| roles.is_solid(s)).collect() }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PlayResult {
    pub playable: bool,
    /// Standable cells `(row, col)` from start to goal when playable.
    pub path: Vec<(usize, usize)>,
    pub reason: Option<String>,
}

/// A* from any standable cell in the three leftmost columns to any standable
/// cell in the rightmost column. Step cost is the horizontal distance moved;
/// the heuristic is the remaining horizontal distance.
pub fn playable(level: &LevelGrid, roles: &TileRoleMap, physics: &PhysicsConfig) -> PlayResult {
    let g = solidity_grid(level, roles);
    let goal_col = g.cols - 1;
    let h = |c: usize| (goal_col - c) as u32;
    // Heap key: f, then rightmost column, then lowest row.
    let mut open = BinaryHeap::new();
    let mut best: HashMap<(usize, usize), u32> = HashMap::new();
    let mut parent: HashMap<(usize, usize), (usize, usize)> = HashMap::new();
    for c in 0..g.cols.min(3) {
        for r in 0..g.rows {
            if g.standable(r, c) {
                best.insert((r, c), 0);
                open.push(Reverse((h(c), Reverse(c), Reverse(r), 0u32)));
            }
        }
    }
    if open.is_empty() {
        return PlayResult { playable: false, path: Vec::new(), reason: Some("no start".into()) };
    }
    while let Some(Reverse((_, Reverse(c), Reverse(r), cost))) = open.pop() {
        if best.get(&(r, c)).is_some_and(|&b| b < cost) {
            continue;
        }
        if c == goal_col {
            let mut path = vec![(r, c)];
            while let Some(&p) = parent.get(path.last().unwrap()) {
                path.push(p);
            }
            path.reverse();
            return PlayResult { playable: true, path, reason: None };
        }
        for (nr, nc, step) in g.successors(r, c, physics) {
            let nc_cost = cost + step;
            if best.get(&(nr, nc)).map_or(true, |&b| nc_cost < b) {
                best.insert((nr, nc), nc_cost);
                parent.insert((nr, nc), (r, c));
                open.push(Reverse((nc_cost + h(nc), Reverse(nc), Reverse(nr), nc_cost)));
            }
        }
    }
    PlayResult { playable: false, path: Vec::new(), reason: Some("goal unreachable".into()) }
}

/// Checks that `path` is a chain of legal manoeuvres from a start cell to the
/// rightmost column.
pub fn validate_path(level: &LevelGrid, roles: &TileRoleMap, physics: &PhysicsConfig, path: &[(usize, usize)]) -> bool {
    let g = solidity_grid(level, roles);
    let (Some(&first), Some(&last)) = (path.first(), path.last()) else { return false };
    if first.1 >= 3 || !g.standable(first.0, first.1) || last.1 != g.cols - 1 {
        return false;
    }
    path.windows(2).all(|w| g.successors(w[0].0, w[0].1, physics).iter().any(|&(r, c, _)| (r, c) == w[1]))
}
