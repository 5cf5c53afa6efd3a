//! On-disk raster format: a `<name>.hdr.json` header next to a raw
//! `<name>.dat` payload, band-sequential, little-endian.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::cube::{check_band_centers, HyperCube};
use super::labels::LabelMask;
use super::raster::ScoreMap;
use crate::error::{bail, Error, Result};
use crate::scalar::{cast, Scalar};

pub const HEADER_SUFFIX: &str = ".hdr.json";
pub const DATA_SUFFIX: &str = ".dat";
pub const LAYOUT: &str = "band-sequential";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Dtype {
    #[serde(rename = "f32le")]
    F32Le,
    #[serde(rename = "u8")]
    U8,
}

impl Dtype {
    fn size(self) -> usize {
        match self {
            Dtype::F32Le => 4,
            Dtype::U8 => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RasterHeader {
    pub height: usize,
    pub width: usize,
    pub bands: usize,
    pub band_centers: Vec<f64>,
    pub dtype: Dtype,
    pub layout: String,
    pub nodata_value: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub multi_hot: Option<bool>,
}

/// Header and payload paths for a raster named by either file or by its
/// stem (`scene` → `scene.hdr.json` + `scene.dat`).
pub fn raster_paths(path: &Path) -> (PathBuf, PathBuf) {
    let s = path.to_string_lossy();
    let stem = s
        .strip_suffix(HEADER_SUFFIX)
        .or_else(|| s.strip_suffix(DATA_SUFFIX))
        .unwrap_or(&s)
        .to_string();
    (
        PathBuf::from(format!("{stem}{HEADER_SUFFIX}")),
        PathBuf::from(format!("{stem}{DATA_SUFFIX}")),
    )
}

fn write_raster(path: &Path, header: &RasterHeader, payload: &[u8]) -> Result<()> {
    let (hdr, dat) = raster_paths(path);
    let text = serde_json::to_string_pretty(header).map_err(|e| Error::json("raster header", e))?;
    fs::write(&hdr, text).map_err(|e| Error::io(&hdr, e))?;
    fs::write(&dat, payload).map_err(|e| Error::io(&dat, e))
}

fn read_raster(path: &Path) -> Result<(RasterHeader, Vec<u8>)> {
    let (hdr, dat) = raster_paths(path);
    let text = fs::read_to_string(&hdr).map_err(|e| Error::io(&hdr, e))?;
    let header: RasterHeader =
        serde_json::from_str(&text).map_err(|e| Error::json(hdr.display().to_string(), e))?;
    if header.layout != LAYOUT {
        bail!(Format, "unsupported layout {:?}", header.layout);
    }
    let payload = fs::read(&dat).map_err(|e| Error::io(&dat, e))?;
    let expected = header.height * header.width * header.bands * header.dtype.size();
    if payload.len() != expected {
        bail!(
            Format,
            "{} holds {} bytes, header implies {expected}",
            dat.display(),
            payload.len()
        );
    }
    Ok((header, payload))
}

fn f32_payload<T: Scalar>(values: &[T]) -> Vec<u8> {
    values
        .iter()
        .flat_map(|&v| v.to_f32_lossy().to_le_bytes())
        .collect()
}

fn f32_values(payload: &[u8]) -> Vec<f32> {
    payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect()
}

pub fn save_cube<T: Scalar>(cube: &HyperCube<T>, path: &Path) -> Result<()> {
    let header = RasterHeader {
        height: cube.height(),
        width: cube.width(),
        bands: cube.bands(),
        band_centers: cube.band_centers().to_vec(),
        dtype: Dtype::F32Le,
        layout: LAYOUT.into(),
        nodata_value: Some(cube.nodata_value().to_f64_lossy()),
        multi_hot: None,
    };
    write_raster(path, &header, &f32_payload(cube.data()))
}

/// Loads a cube. A pixel is nodata when every band holds the header's
/// `nodata_value`.
pub fn load_cube<T: Scalar>(path: &Path) -> Result<HyperCube<T>> {
    let (header, payload) = read_raster(path)?;
    if header.dtype != Dtype::F32Le {
        bail!(Format, "cube payload must be f32le, got {:?}", header.dtype);
    }
    if header.band_centers.len() != header.bands {
        bail!(
            Format,
            "header declares {} bands but lists {} band centers",
            header.bands,
            header.band_centers.len()
        );
    }
    check_band_centers(&header.band_centers)?;
    let values = f32_values(&payload);
    let plane = header.height * header.width;
    let nodata: Vec<bool> = match header.nodata_value {
        Some(nv) => {
            let nv = nv as f32;
            (0..plane)
                .map(|p| (0..header.bands).all(|b| values[b * plane + p].to_bits() == nv.to_bits()))
                .collect()
        }
        None => vec![false; plane],
    };
    HyperCube::new(
        header.height,
        header.width,
        header.band_centers,
        values.into_iter().map(cast).collect(),
        nodata,
        T::lit(header.nodata_value.unwrap_or(super::cube::DEFAULT_NODATA)),
    )
}

pub fn save_mask(mask: &LabelMask, path: &Path) -> Result<()> {
    let header = RasterHeader {
        height: mask.height(),
        width: mask.width(),
        bands: mask.classes(),
        band_centers: Vec::new(),
        dtype: Dtype::U8,
        layout: LAYOUT.into(),
        nodata_value: None,
        multi_hot: Some(mask.is_multi_hot()),
    };
    write_raster(path, &header, mask.values())
}

pub fn load_mask(path: &Path) -> Result<LabelMask> {
    let (header, payload) = read_raster(path)?;
    if header.dtype != Dtype::U8 {
        bail!(Format, "mask payload must be u8, got {:?}", header.dtype);
    }
    LabelMask::new(
        header.height,
        header.width,
        header.bands,
        payload,
        header.multi_hot.unwrap_or(header.bands > 1),
    )
}

/// Score maps and concentration maps reuse the cube layout; their "band
/// centers" are channel indices.
pub fn save_score_map<T: Scalar>(map: &ScoreMap<T>, path: &Path) -> Result<()> {
    let header = RasterHeader {
        height: map.height,
        width: map.width,
        bands: map.channels,
        band_centers: (0..map.channels).map(|c| c as f64).collect(),
        dtype: Dtype::F32Le,
        layout: LAYOUT.into(),
        nodata_value: None,
        multi_hot: None,
    };
    write_raster(path, &header, &f32_payload(&map.data))
}

pub fn load_score_map<T: Scalar>(path: &Path) -> Result<ScoreMap<T>> {
    let (header, payload) = read_raster(path)?;
    if header.dtype != Dtype::F32Le {
        bail!(
            Format,
            "score payload must be f32le, got {:?}",
            header.dtype
        );
    }
    ScoreMap::new(
        header.height,
        header.width,
        header.bands,
        f32_values(&payload).into_iter().map(cast).collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datacube::cube::uniform_axis;
    use proptest::prelude::*;

    fn tiny() -> HyperCube<f32> {
        let data = (0..12).map(|i| i as f32 * 0.25 + 0.1).collect();
        HyperCube::new(
            2,
            2,
            vec![500.0, 600.0, 700.0],
            data,
            vec![false, true, false, false],
            -9999.0,
        )
        .unwrap()
    }

    #[test]
    fn cube_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("scene");
        let c = tiny();
        save_cube(&c, &p).unwrap();
        let back: HyperCube<f32> = load_cube(&p.with_extension("hdr.json")).unwrap();
        assert_eq!(back, c);
        assert!(!back.is_valid(0, 1));
    }

    #[test]
    fn header_band_count_must_match_centers() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad");
        save_cube(&tiny(), &p).unwrap();
        let (hdr, _) = raster_paths(&p);
        let text = fs::read_to_string(&hdr).unwrap();
        let mut h: RasterHeader = serde_json::from_str(&text).unwrap();
        h.bands = 4;
        fs::write(&hdr, serde_json::to_string(&h).unwrap()).unwrap();
        assert!(load_cube::<f32>(&p).is_err());
    }

    #[test]
    fn truncated_payload_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("short");
        save_cube(&tiny(), &p).unwrap();
        let (_, dat) = raster_paths(&p);
        let bytes = fs::read(&dat).unwrap();
        fs::write(&dat, &bytes[..bytes.len() - 4]).unwrap();
        let err = load_cube::<f32>(&p).unwrap_err();
        assert!(matches!(err, Error::Format(_)), "{err}");
        fs::remove_file(&dat).unwrap();
        assert!(matches!(load_cube::<f32>(&p), Err(Error::Io { .. })));
    }

    #[test]
    fn non_monotonic_centers_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("axis");
        save_cube(&tiny(), &p).unwrap();
        let (hdr, _) = raster_paths(&p);
        let text = fs::read_to_string(&hdr).unwrap().replace("700.0", "550.0");
        fs::write(&hdr, text).unwrap();
        assert!(load_cube::<f32>(&p).is_err());
    }

    #[test]
    fn mask_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("mask");
        let m = LabelMask::new(2, 3, 2, vec![0, 1, 0, 1, 1, 0, 0, 0, 1, 1, 0, 0], true).unwrap();
        save_mask(&m, &p).unwrap();
        assert_eq!(load_mask(&p).unwrap(), m);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn random_cubes_round_trip(
            h in 1usize..6, w in 1usize..6, b in 1usize..5,
            seed in any::<u64>(),
        ) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let data = (0..h * w * b).map(|_| rng.random::<f32>() * 100.0).collect();
            let nodata = (0..h * w).map(|_| rng.random_bool(0.2)).collect();
            let c = HyperCube::new(h, w, uniform_axis(400.0, 5.0, b), data, nodata, -9999.0).unwrap();
            let dir = tempfile::tempdir().unwrap();
            let p = dir.path().join("c");
            save_cube(&c, &p).unwrap();
            prop_assert_eq!(load_cube::<f32>(&p).unwrap(), c);
        }
    }
}
