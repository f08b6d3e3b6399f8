//! Multiband rasters with per-pixel validity, the MBT container, and the
//! preprocessing steps applied before tiling.

mod mbt;
mod ops;
mod tile;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use mbt::{decode, encode, read, write, HEADER_LEN, MAGIC};
pub use ops::{
    band_stats, composite_bands, estimate_shift_offsets, rescale_back, rescale_unit,
    set_nodata_mask, shift_values, BandStat, BandStats, Histogram, DEFAULT_SHIFT_PERCENTILE,
};
pub use tile::{tile_dataset, Tile, TileRecord, TileSpec};

/// Nodata code in single-band U8 label rasters.
pub const LABEL_NODATA: u8 = 255;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum DType {
    U8,
    U16,
    F32,
}

impl DType {
    pub fn code(self) -> u16 {
        match self {
            DType::U8 => 0,
            DType::U16 => 1,
            DType::F32 => 2,
        }
    }

    pub fn from_code(code: u16) -> Result<Self> {
        match code {
            0 => Ok(DType::U8),
            1 => Ok(DType::U16),
            2 => Ok(DType::F32),
            c => Err(Error::Unsupported(format!("dtype code {c}"))),
        }
    }

    pub fn size(self) -> usize {
        match self {
            DType::U8 => 1,
            DType::U16 => 2,
            DType::F32 => 4,
        }
    }
}

impl std::fmt::Display for DType {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{self:?}")
    }
}

/// Band-sequential sample storage: index `band·w·h + y·w + x`.
#[derive(Clone, Debug, PartialEq)]
pub enum Samples {
    U8(Vec<u8>),
    U16(Vec<u16>),
    F32(Vec<f32>),
}

impl Samples {
    pub fn dtype(&self) -> DType {
        match self {
            Samples::U8(_) => DType::U8,
            Samples::U16(_) => DType::U16,
            Samples::F32(_) => DType::F32,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Samples::U8(v) => v.len(),
            Samples::U16(v) => v.len(),
            Samples::F32(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn into_f32(self) -> Result<Vec<f32>> {
        match self {
            Samples::F32(v) => Ok(v),
            other => Err(Error::DType {
                expected: DType::F32.to_string(),
                found: other.dtype().to_string(),
            }),
        }
    }

    pub fn get_f64(&self, i: usize) -> f64 {
        match self {
            Samples::U8(v) => v[i] as f64,
            Samples::U16(v) => v[i] as f64,
            Samples::F32(v) => v[i] as f64,
        }
    }
}

/// Affine placement of the pixel grid in map units. Carried through every
/// operation but never interpreted.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeoTransform {
    pub origin_x: f64,
    pub origin_y: f64,
    pub pixel_size_x: f64,
    pub pixel_size_y: f64,
}

impl Default for GeoTransform {
    fn default() -> Self {
        GeoTransform {
            origin_x: 0.0,
            origin_y: 0.0,
            pixel_size_x: 1.0,
            pixel_size_y: -1.0,
        }
    }
}

impl GeoTransform {
    /// Transform of the window whose top-left pixel is `(x, y)`.
    pub fn offset(&self, x: usize, y: usize) -> GeoTransform {
        GeoTransform {
            origin_x: self.origin_x + x as f64 * self.pixel_size_x,
            origin_y: self.origin_y + y as f64 * self.pixel_size_y,
            ..*self
        }
    }
}

/// Multiband grid with an optional per-pixel validity mask. `None` means
/// every pixel is valid and no mask is stored on disk.
#[derive(Clone, Debug, PartialEq)]
pub struct Raster {
    width: usize,
    height: usize,
    bands: usize,
    samples: Samples,
    validmask: Option<Vec<bool>>,
    geotransform: GeoTransform,
}

impl Raster {
    pub fn new(
        width: usize,
        height: usize,
        bands: usize,
        samples: Samples,
        validmask: Option<Vec<bool>>,
        geotransform: GeoTransform,
    ) -> Result<Self> {
        if bands == 0 {
            return Err(Error::Dimension("raster needs at least one band".into()));
        }
        if samples.len() != width * height * bands {
            return Err(Error::Dimension(format!(
                "{width}x{height}x{bands} raster needs {} samples, got {}",
                width * height * bands,
                samples.len()
            )));
        }
        if let Some(m) = &validmask {
            if m.len() != width * height {
                return Err(Error::Dimension(format!(
                    "validity mask has {} entries for {} pixels",
                    m.len(),
                    width * height
                )));
            }
        }
        if geotransform.pixel_size_x == 0.0 || geotransform.pixel_size_y == 0.0 {
            return Err(Error::InvalidArgument("pixel sizes must be nonzero".into()));
        }
        Ok(Raster {
            width,
            height,
            bands,
            samples,
            validmask,
            geotransform,
        })
    }

    pub fn from_u8(width: usize, height: usize, bands: usize, data: Vec<u8>) -> Result<Self> {
        Self::new(width, height, bands, Samples::U8(data), None, GeoTransform::default())
    }

    pub fn from_u16(width: usize, height: usize, bands: usize, data: Vec<u16>) -> Result<Self> {
        Self::new(width, height, bands, Samples::U16(data), None, GeoTransform::default())
    }

    pub fn from_f32(width: usize, height: usize, bands: usize, data: Vec<f32>) -> Result<Self> {
        Self::new(width, height, bands, Samples::F32(data), None, GeoTransform::default())
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bands(&self) -> usize {
        self.bands
    }

    pub fn pixels(&self) -> usize {
        self.width * self.height
    }

    pub fn dtype(&self) -> DType {
        self.samples.dtype()
    }

    pub fn samples(&self) -> &Samples {
        &self.samples
    }

    pub fn into_samples(self) -> Samples {
        self.samples
    }

    pub fn validmask(&self) -> Option<&[bool]> {
        self.validmask.as_deref()
    }

    pub fn geotransform(&self) -> GeoTransform {
        self.geotransform
    }

    pub fn with_geotransform(mut self, g: GeoTransform) -> Result<Self> {
        if g.pixel_size_x == 0.0 || g.pixel_size_y == 0.0 {
            return Err(Error::InvalidArgument("pixel sizes must be nonzero".into()));
        }
        self.geotransform = g;
        Ok(self)
    }

    /// Replace the validity mask (`None` = all valid).
    pub fn with_validmask(mut self, mask: Option<Vec<bool>>) -> Result<Self> {
        if let Some(m) = &mask {
            if m.len() != self.pixels() {
                return Err(Error::Dimension(format!(
                    "validity mask has {} entries for {} pixels",
                    m.len(),
                    self.pixels()
                )));
            }
        }
        self.validmask = mask;
        Ok(self)
    }

    pub fn is_valid(&self, pixel: usize) -> bool {
        self.validmask.as_ref().is_none_or(|m| m[pixel])
    }

    pub fn valid_count(&self) -> usize {
        match &self.validmask {
            None => self.pixels(),
            Some(m) => m.iter().filter(|&&v| v).count(),
        }
    }

    /// Sample value of `band` at `pixel`, widened to `f64`.
    pub fn get(&self, band: usize, pixel: usize) -> f64 {
        self.samples.get_f64(band * self.pixels() + pixel)
    }

    pub fn as_u8(&self) -> Option<&[u8]> {
        match &self.samples {
            Samples::U8(v) => Some(v),
            _ => None,
        }
    }

    pub fn as_u16(&self) -> Option<&[u16]> {
        match &self.samples {
            Samples::U16(v) => Some(v),
            _ => None,
        }
    }

    pub fn as_f32(&self) -> Option<&[f32]> {
        match &self.samples {
            Samples::F32(v) => Some(v),
            _ => None,
        }
    }

    pub(crate) fn expect_dtype(&self, dtype: DType) -> Result<()> {
        if self.dtype() != dtype {
            return Err(Error::DType {
                expected: dtype.to_string(),
                found: self.dtype().to_string(),
            });
        }
        Ok(())
    }

    /// Validity of a single-band U8 label raster: mask bit set and code ≠ nodata.
    pub fn label_valid(&self, pixel: usize) -> bool {
        match &self.samples {
            Samples::U8(v) => self.is_valid(pixel) && v[pixel] != LABEL_NODATA,
            _ => self.is_valid(pixel),
        }
    }

    /// Copy the `w × h` window whose top-left corner is `(x, y)`.
    pub fn window(&self, x: usize, y: usize, w: usize, h: usize) -> Result<Raster> {
        if x + w > self.width || y + h > self.height {
            return Err(Error::Dimension(format!(
                "window {w}x{h}+{x}+{y} exceeds {}x{} raster",
                self.width, self.height
            )));
        }
        fn cut<T: Copy>(src: &[T], r: &Raster, x: usize, y: usize, w: usize, h: usize) -> Vec<T> {
            let mut out = Vec::with_capacity(w * h * r.bands);
            for b in 0..r.bands {
                let plane = &src[b * r.pixels()..(b + 1) * r.pixels()];
                for row in y..y + h {
                    out.extend_from_slice(&plane[row * r.width + x..row * r.width + x + w]);
                }
            }
            out
        }
        let samples = match &self.samples {
            Samples::U8(v) => Samples::U8(cut(v, self, x, y, w, h)),
            Samples::U16(v) => Samples::U16(cut(v, self, x, y, w, h)),
            Samples::F32(v) => Samples::F32(cut(v, self, x, y, w, h)),
        };
        let mask = self.validmask.as_ref().map(|m| {
            let mut out = Vec::with_capacity(w * h);
            for row in y..y + h {
                out.extend_from_slice(&m[row * self.width + x..row * self.width + x + w]);
            }
            out
        });
        Raster::new(w, h, self.bands, samples, mask, self.geotransform.offset(x, y))
    }
}
