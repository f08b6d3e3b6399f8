use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Raster, Samples, LABEL_NODATA};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TileSpec {
    pub tile_size: usize,
    pub stride: usize,
    pub min_valid_fraction: f64,
}

impl Default for TileSpec {
    fn default() -> Self {
        TileSpec {
            tile_size: 512,
            stride: 512,
            min_valid_fraction: 0.5,
        }
    }
}

impl TileSpec {
    pub fn new(tile_size: usize) -> Self {
        TileSpec {
            tile_size,
            stride: tile_size,
            ..TileSpec::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.tile_size == 0 {
            return Err(Error::InvalidArgument("tile_size must be positive".into()));
        }
        if self.stride == 0 || self.stride > self.tile_size {
            return Err(Error::InvalidArgument(format!(
                "stride must be in 1..={}, got {}",
                self.tile_size, self.stride
            )));
        }
        if !(0.0..=1.0).contains(&self.min_valid_fraction) {
            return Err(Error::InvalidArgument(format!(
                "min_valid_fraction {} outside [0, 1]",
                self.min_valid_fraction
            )));
        }
        Ok(())
    }
}

/// Where a tile came from in its scene.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TileRecord {
    pub x: usize,
    pub y: usize,
    pub size: usize,
    pub valid_fraction: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Tile {
    pub image: Raster,
    pub labels: Raster,
    pub record: TileRecord,
}

/// Cut pixel-aligned image/label windows, row-major by offset.
///
/// A pixel counts as valid when the image marks it valid and the label is
/// valid and not nodata. Label pixels under invalid image pixels are set to
/// nodata in the emitted label tile.
pub fn tile_dataset(image: &Raster, labels: &Raster, spec: &TileSpec) -> Result<Vec<Tile>> {
    spec.validate()?;
    if (image.width(), image.height()) != (labels.width(), labels.height()) {
        return Err(Error::Dimension(format!(
            "image is {}x{}, labels are {}x{}",
            image.width(),
            image.height(),
            labels.width(),
            labels.height()
        )));
    }
    if labels.bands() != 1 {
        return Err(Error::Dimension(format!(
            "label raster has {} bands, expected 1",
            labels.bands()
        )));
    }
    let labels_u8 = labels
        .as_u8()
        .ok_or_else(|| Error::DType {
            expected: "U8".into(),
            found: labels.dtype().to_string(),
        })?
        .to_vec();

    let t = spec.tile_size;
    let offsets = |len: usize| -> Vec<usize> {
        if t > len {
            Vec::new()
        } else {
            (0..=len - t).step_by(spec.stride).collect()
        }
    };
    let windows: Vec<(usize, usize)> = offsets(image.height())
        .into_iter()
        .flat_map(|y| offsets(image.width()).into_iter().map(move |x| (x, y)))
        .collect();

    let tiles: Vec<Option<Tile>> = windows
        .par_iter()
        .map(|&(x, y)| -> Result<Option<Tile>> {
            let mut valid = 0usize;
            for row in y..y + t {
                for col in x..x + t {
                    let p = row * image.width() + col;
                    if image.is_valid(p) && labels.is_valid(p) && labels_u8[p] != LABEL_NODATA {
                        valid += 1;
                    }
                }
            }
            let fraction = valid as f64 / (t * t) as f64;
            if fraction < spec.min_valid_fraction {
                return Ok(None);
            }
            let img = image.window(x, y, t, t)?;
            let lab = labels.window(x, y, t, t)?;
            let mut codes = match lab.samples() {
                Samples::U8(v) => v.clone(),
                _ => unreachable!("label dtype checked above"),
            };
            for (i, c) in codes.iter_mut().enumerate() {
                if !img.is_valid(i) || !lab.is_valid(i) {
                    *c = LABEL_NODATA;
                }
            }
            let lab = Raster::new(t, t, 1, Samples::U8(codes), None, lab.geotransform())?;
            Ok(Some(Tile {
                image: img,
                labels: lab,
                record: TileRecord {
                    x,
                    y,
                    size: t,
                    valid_fraction: fraction,
                },
            }))
        })
        .collect::<Result<_>>()?;
    Ok(tiles.into_iter().flatten().collect())
}
