use super::model::HyperSegFormer;
use super::ops::sigmoid;
use super::tape::Tape;
use super::tensor::Tensor;
use crate::datacube::{extract_tiles, stitch, HyperCube, ScoreMap, TileGrid};
use crate::error::Result;

/// Full-resolution logits for equally sized tiles, in order.
pub fn tile_logits(
    model: &HyperSegFormer,
    tiles: &[HyperCube<f32>],
    batch_size: usize,
) -> Result<Vec<ScoreMap<f32>>> {
    let mut out = Vec::with_capacity(tiles.len());
    for chunk in tiles.chunks(batch_size.max(1)) {
        let xs = chunk
            .iter()
            .map(|c| model.normalizer().encode(c).map(|(x, _)| x))
            .collect::<Result<Vec<Tensor>>>()?;
        let mut tape = Tape::inference();
        let x = tape.constant(Tensor::stack(&xs)?);
        let logits = model.forward_full(&mut tape, x, false)?;
        tape.check_finite()?;
        let v = tape.value(logits);
        let (_, k, h, w) = v.dims4();
        for i in 0..chunk.len() {
            out.push(ScoreMap::new(h, w, k, v.sample(i).into_data())?);
        }
    }
    Ok(out)
}

/// Per-class probabilities for one tile.
pub fn predict_tile(model: &HyperSegFormer, tile: &HyperCube<f32>) -> Result<ScoreMap<f32>> {
    let logits = tile_logits(model, std::slice::from_ref(tile), 1)?.remove(0);
    to_probabilities(logits)
}

fn to_probabilities(mut map: ScoreMap<f32>) -> Result<ScoreMap<f32>> {
    map.data.iter_mut().for_each(|v| *v = sigmoid(*v));
    Ok(map)
}

/// Tiles `cube` on `grid`, runs the model, stitches logits by mean over
/// overlaps and applies the sigmoid.
pub fn infer(
    model: &HyperSegFormer,
    cube: &HyperCube<f32>,
    grid: &TileGrid,
    batch_size: usize,
) -> Result<ScoreMap<f32>> {
    let tiles = extract_tiles(cube, grid, cube.nodata_value())?;
    let logits = tile_logits(model, &tiles, batch_size)?;
    to_probabilities(stitch(&logits, grid)?)
}
