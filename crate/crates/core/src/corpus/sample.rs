use super::affordance::{AffordanceMap, AffordanceVector};
use super::image::{slice_context, LevelImage};
use super::level::LevelGrid;
use crate::error::{CteError, Result};
use crate::features::{patch_edges, EdgeMap};
use crate::neuralkit::Tensor;
use crate::scalar::Scalar;
use serde::{Deserialize, Serialize};

/// Where a tile came from.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TileOrigin {
    pub level: String,
    pub row: usize,
    pub col: usize,
}

/// Autoencoder input triple for one tile.
#[derive(Clone, Debug, PartialEq)]
pub struct TileSample<T> {
    /// `[3, 48, 48]`, values in `[0, 1]`.
    pub context: Tensor<T>,
    pub affordance: AffordanceVector,
    /// Computed from the tile's own 16x16 patch.
    pub edges: EdgeMap,
    pub origin: TileOrigin,
}

impl<T: Scalar> TileSample<T> {
    pub fn affordance_scalars(&self) -> Vec<T> {
        self.affordance.iter().map(|&b| T::lit(b as f64)).collect()
    }
}

/// Builds the sample for tile `(row, col)`.
///
/// `grid` supplies the symbol for the affordance lookup; when it is `None`
/// (image-only games) the affordance is the zero vector.
pub fn build_tile_sample<T: Scalar>(
    image: &LevelImage,
    grid: Option<&LevelGrid>,
    affordances: &AffordanceMap,
    level_id: &str,
    row: usize,
    col: usize,
) -> Result<TileSample<T>> {
    let context = slice_context(image, row, col)?;
    let patch = image.tile_patch(row, col)?;
    let affordance = match grid {
        Some(g) => {
            if g.rows() != image.tile_rows() || g.cols() != image.tile_cols() {
                return Err(CteError::dim(
                    format!("level {level_id} grid vs image"),
                    format!("{}x{}", image.tile_rows(), image.tile_cols()),
                    format!("{}x{}", g.rows(), g.cols()),
                ));
            }
            affordances.lookup(g.get(row, col))?
        }
        None => [0; super::affordance::AFFORDANCE_DIM],
    };
    Ok(TileSample { context, affordance, edges: patch_edges(&patch), origin: TileOrigin { level: level_id.to_string(), row, col } })
}
