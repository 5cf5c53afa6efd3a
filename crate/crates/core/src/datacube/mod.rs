//! Radiance datacubes, label masks, tiling and the on-disk raster format.

mod cube;
pub mod io;
mod labels;
mod raster;
mod tiling;

pub use cube::{uniform_axis, HyperCube, DEFAULT_NODATA};
pub use io::{load_cube, load_mask, load_score_map, save_cube, save_mask, save_score_map};
pub use labels::{aggregate_minerals, ComponentLayer, ComponentMap, LabelMask};
pub use raster::{BinaryMask, ScoreMap};
pub use tiling::{
    extract_label_tiles, extract_score_tiles, extract_tile, extract_tiles, stitch, tile_grid,
    TileGrid,
};
