//! Level text, affordance mappings, level images, splits and tile statistics.

pub mod affordance;
pub mod image;
pub mod level;
pub mod sample;
pub mod split;
pub mod stats;
pub mod synthetic;

pub use affordance::{lookup_affordance, AffordanceMap, AffordanceVector, AFFORDANCE_DIM};
pub use image::{image_to_symbol_grid, slice_context, LevelImage, Patch, Tileset, TILE};
pub use level::{parse_vglc_level, LevelGrid, TileSymbol};
pub use sample::{build_tile_sample, TileOrigin, TileSample};
pub use split::{split_levels, CorpusSplit};
pub use stats::{level_percentages, median, tile_distribution};
