use std::path::{Path, PathBuf};

use clap::Subcommand;
use hsk_core::datacube::{
    extract_tiles, load_cube, load_score_map, save_cube, save_mask, tile_grid, LabelMask, ScoreMap,
};
use hsk_core::{Cube, Error, Result};
use serde::Serialize;

use crate::config::require;
use crate::manifest::Recorder;

#[derive(Debug, Subcommand)]
pub enum ConvertCommand {
    /// Keep the bands whose centers fall inside the given nm ranges.
    SelectBands {
        #[arg(long)]
        cube: PathBuf,
        /// Output cube header.
        #[arg(long)]
        out: PathBuf,
        /// Comma-separated `LOW-HIGH` ranges in nm, ascending.
        #[arg(long, value_delimiter = ',', value_parser = parse_range, default_value = "1573-1699,2004-2478")]
        ranges: Vec<(f64, f64)>,
    },
    /// Cut a cube into square tiles plus a `grid.json` layout.
    Tile {
        #[arg(long)]
        cube: PathBuf,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 128)]
        tile: usize,
        #[arg(long, default_value_t = 0)]
        overlap: usize,
        /// Pull edge tiles back inside the image instead of padding.
        #[arg(long)]
        no_pad: bool,
    },
    /// Threshold a score map channel into a mask.
    Binarize {
        #[arg(long)]
        scores: PathBuf,
        /// Output mask header.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        threshold: f64,
        /// Channel to threshold; all channels when unset.
        #[arg(long)]
        channel: Option<usize>,
    },
}

fn parse_range(s: &str) -> std::result::Result<(f64, f64), String> {
    let (lo, hi) = s
        .split_once('-')
        .ok_or_else(|| format!("expected LOW-HIGH, got {s:?}"))?;
    let p = |v: &str| v.trim().parse::<f64>().map_err(|e| format!("{v:?}: {e}"));
    Ok((p(lo)?, p(hi)?))
}

#[derive(Serialize)]
struct Snapshot<'a> {
    action: &'a str,
    input: &'a Path,
    #[serde(flatten)]
    params: serde_json::Value,
}

/// Splits an output file path into its directory and file name.
fn split_out(out: &Path) -> Result<(PathBuf, String)> {
    let name = out
        .file_name()
        .ok_or_else(|| Error::InvalidArgument(format!("{} is not a file path", out.display())))?
        .to_string_lossy()
        .into_owned();
    let dir = out.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok((
        if dir.as_os_str().is_empty() {
            PathBuf::from(".")
        } else {
            dir
        },
        name,
    ))
}

pub fn run(cmd: ConvertCommand) -> Result<()> {
    match cmd {
        ConvertCommand::SelectBands { cube, out, ranges } => {
            require(&cube, "cube")?;
            let input: Cube = load_cube(&cube)?;
            let selected = input.select_bands(&ranges)?;
            let (dir, name) = split_out(&out)?;
            let mut rec = Recorder::new("convert", &dir)?;
            rec.input(&cube);
            save_cube(&selected, &rec.raster(name))?;
            let params = serde_json::json!({ "ranges": ranges });
            rec.finish(
                &Snapshot {
                    action: "select-bands",
                    input: &cube,
                    params,
                },
                None,
            )?;
            println!("kept {} of {} bands", selected.bands(), input.bands());
        }
        ConvertCommand::Tile {
            cube,
            out,
            tile,
            overlap,
            no_pad,
        } => {
            require(&cube, "cube")?;
            let input: Cube = load_cube(&cube)?;
            let grid = tile_grid(input.height(), input.width(), tile, overlap, !no_pad)?;
            let tiles = extract_tiles(&input, &grid, input.nodata_value())?;
            let mut rec = Recorder::new("convert", &out)?;
            rec.input(&cube);
            for (i, t) in tiles.iter().enumerate() {
                save_cube(t, &rec.raster(format!("tile_{i:04}.hdr.json")))?;
            }
            let grid_path = rec.output("grid.json");
            let text =
                serde_json::to_string_pretty(&grid).map_err(|e| Error::Format(e.to_string()))?;
            std::fs::write(&grid_path, text + "\n").map_err(|e| Error::Io {
                path: grid_path,
                source: e,
            })?;
            let params = serde_json::json!({ "tile": tile, "overlap": overlap, "pad": !no_pad });
            rec.finish(
                &Snapshot {
                    action: "tile",
                    input: &cube,
                    params,
                },
                None,
            )?;
            println!("wrote {} tiles of {tile} px", tiles.len());
        }
        ConvertCommand::Binarize {
            scores,
            out,
            threshold,
            channel,
        } => {
            require(&scores, "score map")?;
            let map: ScoreMap<f32> = load_score_map(&scores)?;
            let channels: Vec<usize> = match channel {
                Some(c) if c >= map.channels => {
                    return Err(Error::InvalidArgument(format!(
                        "channel {c} of a {}-channel map",
                        map.channels
                    )))
                }
                Some(c) => vec![c],
                None => (0..map.channels).collect(),
            };
            let masks: Vec<_> = channels
                .iter()
                .map(|&c| map.threshold(c, threshold as f32))
                .collect();
            let label = if masks.len() == 1 {
                LabelMask::binary(&masks[0])
            } else {
                LabelMask::multi_hot(&masks)?
            };
            let (dir, name) = split_out(&out)?;
            let mut rec = Recorder::new("convert", &dir)?;
            rec.input(&scores);
            save_mask(&label, &rec.raster(name))?;
            let params = serde_json::json!({ "threshold": threshold, "channel": channel });
            rec.finish(
                &Snapshot {
                    action: "binarize",
                    input: &scores,
                    params,
                },
                None,
            )?;
            let positives: usize = masks.iter().map(|m| m.count()).sum();
            println!("{positives} pixels at or above {threshold}");
        }
    }
    Ok(())
}
