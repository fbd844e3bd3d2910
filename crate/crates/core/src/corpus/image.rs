use super::level::{LevelGrid, TileSymbol};
use crate::error::{CteError, Result};
use crate::neuralkit::Tensor;
use crate::scalar::Scalar;
use std::collections::HashMap;
use std::path::Path;

/// Tile side in pixels.
pub const TILE: usize = 16;
/// Bytes in one RGB tile patch.
pub const PATCH_BYTES: usize = TILE * TILE * 3;
/// Context window side in pixels (3x3 tiles).
pub const CONTEXT: usize = 3 * TILE;

/// One 16x16 RGB patch, row-major, interleaved channels.
pub type Patch = [u8; PATCH_BYTES];

/// 8-bit RGB level raster whose sides are multiples of the tile size.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LevelImage {
    height: usize,
    width: usize,
    pixels: Vec<u8>,
}

impl LevelImage {
    pub fn new(height: usize, width: usize, pixels: Vec<u8>) -> Result<Self> {
        if height == 0 || width == 0 || height % TILE != 0 || width % TILE != 0 {
            return Err(CteError::Image(format!("image {width}x{height} is not a positive multiple of {TILE} pixels")));
        }
        if pixels.len() != height * width * 3 {
            return Err(CteError::dim("level image pixels", height * width * 3, pixels.len()));
        }
        Ok(Self { height, width, pixels })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn tile_rows(&self) -> usize {
        self.height / TILE
    }

    pub fn tile_cols(&self) -> usize {
        self.width / TILE
    }

    /// Assembles an image from per-tile patches.
    pub fn from_tiles<'a, F>(rows: usize, cols: usize, mut patch_at: F) -> Result<Self>
    where
        F: FnMut(usize, usize) -> &'a Patch,
    {
        let (h, w) = (rows * TILE, cols * TILE);
        let mut pixels = vec![0u8; h * w * 3];
        for r in 0..rows {
            for c in 0..cols {
                let p = patch_at(r, c);
                for y in 0..TILE {
                    let dst = ((r * TILE + y) * w + c * TILE) * 3;
                    pixels[dst..dst + TILE * 3].copy_from_slice(&p[y * TILE * 3..(y + 1) * TILE * 3]);
                }
            }
        }
        Self::new(h, w, pixels)
    }

    pub fn load_png(path: &Path) -> Result<Self> {
        let img = image::open(path)?.to_rgb8();
        let (w, h) = img.dimensions();
        Self::new(h as usize, w as usize, img.into_raw())
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        let buf = image::RgbImage::from_raw(self.width as u32, self.height as u32, self.pixels.clone())
            .ok_or_else(|| CteError::Image("raster size mismatch".into()))?;
        let mut bytes = Vec::new();
        buf.write_to(&mut std::io::Cursor::new(&mut bytes), image::ImageFormat::Png)?;
        crate::io::write_atomic(path, &bytes)
    }

    fn check_tile(&self, row: usize, col: usize) -> Result<()> {
        if row >= self.tile_rows() || col >= self.tile_cols() {
            return Err(CteError::Bounds { row, col, rows: self.tile_rows(), cols: self.tile_cols() });
        }
        Ok(())
    }

    /// The 16x16x3 patch of tile `(row, col)`.
    pub fn tile_patch(&self, row: usize, col: usize) -> Result<Patch> {
        self.check_tile(row, col)?;
        let mut p = [0u8; PATCH_BYTES];
        for y in 0..TILE {
            let src = ((row * TILE + y) * self.width + col * TILE) * 3;
            p[y * TILE * 3..(y + 1) * TILE * 3].copy_from_slice(&self.pixels[src..src + TILE * 3]);
        }
        Ok(p)
    }

    /// Pixel at `(y, x)` as `[r, g, b]`.
    pub fn pixel(&self, y: usize, x: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }
}

/// 48x48x3 context around tile `(row, col)` as a `[3, 48, 48]` tensor in `[0, 1]`.
///
/// Neighbours outside the level replicate the nearest edge tile (tile-level
/// edge clamp), so corner tiles see copies of themselves and their edge
/// neighbours rather than a synthetic border colour.
pub fn slice_context<T: Scalar>(image: &LevelImage, row: usize, col: usize) -> Result<Tensor<T>> {
    image.check_tile(row, col)?;
    let (tr, tc) = (image.tile_rows() as isize, image.tile_cols() as isize);
    let mut data = vec![T::zero(); 3 * CONTEXT * CONTEXT];
    for br in 0..3isize {
        let sr = (row as isize + br - 1).clamp(0, tr - 1) as usize;
        for bc in 0..3isize {
            let sc = (col as isize + bc - 1).clamp(0, tc - 1) as usize;
            for y in 0..TILE {
                for x in 0..TILE {
                    let px = image.pixel(sr * TILE + y, sc * TILE + x);
                    let (cy, cx) = (br as usize * TILE + y, bc as usize * TILE + x);
                    for ch in 0..3 {
                        data[(ch * CONTEXT + cy) * CONTEXT + cx] = T::lit(px[ch] as f64 / 255.0);
                    }
                }
            }
        }
    }
    Tensor::new(vec![3, CONTEXT, CONTEXT], data)
}

/// Sprite table assigning a symbol to each distinct 16x16 patch.
///
/// Two patches denote the same tile type iff their bytes are identical.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Tileset {
    sprites: Vec<(TileSymbol, Patch)>,
    index: HashMap<Patch, usize>,
}

impl Tileset {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, symbol: TileSymbol, patch: Patch) -> Result<()> {
        if let Some(&i) = self.index.get(&patch) {
            if self.sprites[i].0 != symbol {
                return Err(CteError::InvalidArgument(format!(
                    "sprite already registered as {:?}, cannot also be {symbol:?}",
                    self.sprites[i].0
                )));
            }
            return Ok(());
        }
        self.index.insert(patch, self.sprites.len());
        self.sprites.push((symbol, patch));
        Ok(())
    }

    pub fn symbol_of(&self, patch: &Patch) -> Option<TileSymbol> {
        self.index.get(patch).map(|&i| self.sprites[i].0)
    }

    pub fn sprite_of(&self, symbol: TileSymbol) -> Option<&Patch> {
        self.sprites.iter().find(|(s, _)| *s == symbol).map(|(_, p)| p)
    }

    pub fn len(&self) -> usize {
        self.sprites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sprites.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &(TileSymbol, Patch)> {
        self.sprites.iter()
    }

    fn next_free_symbol(&self) -> TileSymbol {
        // Printable ASCII first, then Latin-1 supplement and beyond.
        let used: std::collections::BTreeSet<char> = self.sprites.iter().map(|(s, _)| *s).collect();
        (33u32..127).chain(0xC0..0x2FFF).filter_map(char::from_u32).find(|c| !used.contains(c)).expect("symbol space exhausted")
    }
}

/// Symbol grid of an image-only level. Unknown patches are added to
/// `tileset` under fresh symbols in row-major first-appearance order.
pub fn image_to_symbol_grid(image: &LevelImage, tileset: &mut Tileset) -> Result<LevelGrid> {
    let (rows, cols) = (image.tile_rows(), image.tile_cols());
    let mut cells = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            let p = image.tile_patch(r, c)?;
            let s = match tileset.symbol_of(&p) {
                Some(s) => s,
                None => {
                    let s = tileset.next_free_symbol();
                    tileset.insert(s, p)?;
                    s
                }
            };
            cells.push(s);
        }
    }
    LevelGrid::new(rows, cols, cells)
}
