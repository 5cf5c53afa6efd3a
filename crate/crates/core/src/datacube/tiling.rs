use serde::{Deserialize, Serialize};

use super::cube::HyperCube;
use super::labels::LabelMask;
use super::raster::ScoreMap;
use crate::error::{bail, Result};
use crate::scalar::Scalar;

/// Placement of square tiles over an image.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TileGrid {
    pub tile_size: usize,
    pub overlap: usize,
    /// Top-left corners, row-major.
    pub origins: Vec<(usize, usize)>,
    /// Extent including padding; equals `extent` when no padding is needed.
    pub padded_extent: (usize, usize),
    /// Source image extent.
    pub extent: (usize, usize),
}

impl TileGrid {
    pub fn len(&self) -> usize {
        self.origins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.origins.is_empty()
    }

    pub fn stride(&self) -> usize {
        self.tile_size - self.overlap
    }
}

fn axis_origins(
    extent: usize,
    tile: usize,
    stride: usize,
    pad: bool,
) -> Result<(Vec<usize>, usize)> {
    let mut origins = vec![0usize];
    if pad {
        while origins[origins.len() - 1] + tile < extent {
            let next = origins[origins.len() - 1] + stride;
            origins.push(next);
        }
        let reach = origins[origins.len() - 1] + tile;
        Ok((origins, reach.max(extent)))
    } else {
        if tile > extent {
            bail!(
                InvalidArgument,
                "tile size {tile} exceeds extent {extent} and padding is disabled"
            );
        }
        while origins[origins.len() - 1] + tile < extent {
            let next = origins[origins.len() - 1] + stride;
            if next + tile > extent {
                origins.push(extent - tile);
                break;
            }
            origins.push(next);
        }
        Ok((origins, extent))
    }
}

/// Lays out tiles at stride `tile_size - overlap`.
///
/// With `pad`, trailing tiles may run past the image edge and the padded
/// extent grows to hold them. Without it, the last tile on each axis is
/// pulled back to end exactly at the edge.
pub fn tile_grid(
    height: usize,
    width: usize,
    tile_size: usize,
    overlap: usize,
    pad: bool,
) -> Result<TileGrid> {
    if tile_size == 0 {
        bail!(InvalidArgument, "tile size must be at least 1");
    }
    if overlap >= tile_size {
        bail!(
            InvalidArgument,
            "overlap {overlap} must be smaller than tile size {tile_size}"
        );
    }
    if height == 0 || width == 0 {
        bail!(InvalidArgument, "cannot tile an empty extent");
    }
    let stride = tile_size - overlap;
    let (rows, padded_h) = axis_origins(height, tile_size, stride, pad)?;
    let (cols, padded_w) = axis_origins(width, tile_size, stride, pad)?;
    let origins = rows
        .iter()
        .flat_map(|&r| cols.iter().map(move |&c| (r, c)))
        .collect();
    Ok(TileGrid {
        tile_size,
        overlap,
        origins,
        padded_extent: (padded_h, padded_w),
        extent: (height, width),
    })
}

fn check_extent(grid: &TileGrid, height: usize, width: usize) -> Result<()> {
    if grid.extent != (height, width) {
        bail!(
            Shape,
            "grid was built for {:?} but the image is {height}x{width}",
            grid.extent
        );
    }
    Ok(())
}

/// Cuts `cube` into tiles. Pixels outside the image are filled with
/// `pad_value` and flagged nodata, as are source nodata pixels.
pub fn extract_tiles<T: Scalar>(
    cube: &HyperCube<T>,
    grid: &TileGrid,
    pad_value: T,
) -> Result<Vec<HyperCube<T>>> {
    check_extent(grid, cube.height(), cube.width())?;
    grid.origins
        .iter()
        .map(|&origin| extract_tile(cube, origin, grid.tile_size, pad_value))
        .collect()
}

pub fn extract_tile<T: Scalar>(
    cube: &HyperCube<T>,
    (r0, c0): (usize, usize),
    size: usize,
    pad_value: T,
) -> Result<HyperCube<T>> {
    let plane = size * size;
    let bands = cube.bands();
    let mut data = vec![pad_value; plane * bands];
    let mut nodata = vec![true; plane];
    for r in 0..size {
        let sr = r0 + r;
        if sr >= cube.height() {
            break;
        }
        for c in 0..size {
            let sc = c0 + c;
            if sc >= cube.width() {
                break;
            }
            if cube.is_valid(sr, sc) {
                nodata[r * size + c] = false;
                for b in 0..bands {
                    data[b * plane + r * size + c] = cube.get(sr, sc, b);
                }
            }
        }
    }
    HyperCube::new(
        size,
        size,
        cube.band_centers().to_vec(),
        data,
        nodata,
        pad_value,
    )
}

/// Cuts a score map into tiles, zero-filling outside the image.
pub fn extract_score_tiles<T: Scalar>(
    map: &ScoreMap<T>,
    grid: &TileGrid,
) -> Result<Vec<ScoreMap<T>>> {
    check_extent(grid, map.height, map.width)?;
    let t = grid.tile_size;
    Ok(grid
        .origins
        .iter()
        .map(|&(r0, c0)| {
            let mut out = ScoreMap::filled(t, t, map.channels, T::zero());
            for ch in 0..map.channels {
                for r in 0..t.min(map.height.saturating_sub(r0)) {
                    for c in 0..t.min(map.width.saturating_sub(c0)) {
                        out.data[(ch * t + r) * t + c] = map.get(r0 + r, c0 + c, ch);
                    }
                }
            }
            out
        })
        .collect())
}

/// Cuts a label mask into tiles; padding is labeled negative.
pub fn extract_label_tiles(mask: &LabelMask, grid: &TileGrid) -> Result<Vec<LabelMask>> {
    check_extent(grid, mask.height(), mask.width())?;
    let t = grid.tile_size;
    grid.origins
        .iter()
        .map(|&(r0, c0)| {
            let mut values = vec![0u8; t * t * mask.classes()];
            for k in 0..mask.classes() {
                for r in 0..t.min(mask.height().saturating_sub(r0)) {
                    for c in 0..t.min(mask.width().saturating_sub(c0)) {
                        values[(k * t + r) * t + c] = mask.get(r0 + r, c0 + c, k) as u8;
                    }
                }
            }
            LabelMask::new(t, t, mask.classes(), values, mask.is_multi_hot())
        })
        .collect()
}

/// Reassembles per-tile predictions into a full-extent map. Pixels covered
/// by several tiles take the mean of their contributions; padding is
/// cropped away.
pub fn stitch<T: Scalar>(predictions: &[ScoreMap<T>], grid: &TileGrid) -> Result<ScoreMap<T>> {
    if predictions.len() != grid.len() {
        bail!(
            Shape,
            "{} predictions for a grid of {} tiles",
            predictions.len(),
            grid.len()
        );
    }
    let Some(first) = predictions.first() else {
        bail!(Shape, "nothing to stitch");
    };
    let channels = first.channels;
    let t = grid.tile_size;
    if let Some(bad) = predictions
        .iter()
        .position(|p| p.height != t || p.width != t || p.channels != channels)
    {
        bail!(Shape, "prediction {bad} is not {t}x{t}x{channels}");
    }
    let (h, w) = grid.extent;
    let mut sum = vec![T::zero(); h * w * channels];
    let mut count = vec![0u32; h * w];
    for (pred, &(r0, c0)) in predictions.iter().zip(&grid.origins) {
        let rows = t.min(h.saturating_sub(r0));
        let cols = t.min(w.saturating_sub(c0));
        for r in 0..rows {
            for c in 0..cols {
                count[(r0 + r) * w + c0 + c] += 1;
            }
        }
        for ch in 0..channels {
            for r in 0..rows {
                for c in 0..cols {
                    sum[(ch * h + r0 + r) * w + c0 + c] += pred.get(r, c, ch);
                }
            }
        }
    }
    let plane = h * w;
    for (i, v) in sum.iter_mut().enumerate() {
        let n = count[i % plane];
        if n > 1 {
            *v /= T::count(n as usize);
        }
    }
    ScoreMap::new(h, w, channels, sum)
}
