use serde::{Deserialize, Serialize};

use super::{DType, Raster, Samples};
use crate::error::{Error, Result};

/// Lower percentile used to pick a per-band shift offset when none is given.
pub const DEFAULT_SHIFT_PERCENTILE: f64 = 0.005;

const U16_HALF_RANGE: f64 = 32767.5;
const RESCALE_SLACK: f64 = 1e-6;

/// Stack single-band rasters into one multiband raster, in the given order.
pub fn composite_bands(inputs: &[Raster]) -> Result<Raster> {
    let first = inputs
        .first()
        .ok_or_else(|| Error::Empty("no bands to composite".into()))?;
    for (i, r) in inputs.iter().enumerate() {
        if r.bands() != 1 {
            return Err(Error::InvalidArgument(format!(
                "input {i} has {} bands, expected 1",
                r.bands()
            )));
        }
        if (r.width(), r.height()) != (first.width(), first.height()) {
            return Err(Error::Dimension(format!(
                "input {i} is {}x{}, expected {}x{}",
                r.width(),
                r.height(),
                first.width(),
                first.height()
            )));
        }
        r.expect_dtype(first.dtype())?;
        if r.geotransform() != first.geotransform() {
            return Err(Error::Dimension(format!("input {i} has a different geotransform")));
        }
    }
    let samples = match first.dtype() {
        DType::U8 => Samples::U8(inputs.iter().flat_map(|r| r.as_u8().unwrap().iter().copied()).collect()),
        DType::U16 => Samples::U16(inputs.iter().flat_map(|r| r.as_u16().unwrap().iter().copied()).collect()),
        DType::F32 => Samples::F32(inputs.iter().flat_map(|r| r.as_f32().unwrap().iter().copied()).collect()),
    };
    let mask = if inputs.iter().all(|r| r.validmask().is_none()) {
        None
    } else {
        Some((0..first.pixels()).map(|p| inputs.iter().all(|r| r.is_valid(p))).collect())
    };
    Raster::new(
        first.width(),
        first.height(),
        inputs.len(),
        samples,
        mask,
        first.geotransform(),
    )
}

/// Uniform-bin histogram starting at `lower`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub lower: f64,
    pub bin_width: f64,
    pub counts: Vec<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BandStat {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub valid: u64,
    pub histogram: Histogram,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BandStats {
    pub bands: Vec<BandStat>,
}

/// Per-band statistics over valid pixels, with a `bins`-bin histogram spanning `[min, max]`.
pub fn band_stats(r: &Raster, bins: usize) -> Result<BandStats> {
    if bins == 0 {
        return Err(Error::InvalidArgument("histogram needs at least one bin".into()));
    }
    if r.valid_count() == 0 {
        return Err(Error::Empty("every pixel is invalid".into()));
    }
    let n = r.pixels();
    let mut bands = Vec::with_capacity(r.bands());
    for b in 0..r.bands() {
        // Welford accumulation.
        let (mut count, mut mean, mut m2) = (0u64, 0.0f64, 0.0f64);
        let (mut min, mut max) = (f64::INFINITY, f64::NEG_INFINITY);
        for p in (0..n).filter(|&p| r.is_valid(p)) {
            let v = r.get(b, p);
            count += 1;
            let d = v - mean;
            mean += d / count as f64;
            m2 += d * (v - mean);
            min = min.min(v);
            max = max.max(v);
        }
        let span = max - min;
        let bin_width = if span > 0.0 { span / bins as f64 } else { 1.0 };
        let mut counts = vec![0u64; bins];
        for p in (0..n).filter(|&p| r.is_valid(p)) {
            let idx = ((r.get(b, p) - min) / bin_width).floor() as usize;
            counts[idx.min(bins - 1)] += 1;
        }
        bands.push(BandStat {
            min,
            max,
            mean: mean.clamp(min, max),
            std: (m2 / count as f64).max(0.0).sqrt(),
            valid: count,
            histogram: Histogram {
                lower: min,
                bin_width,
                counts,
            },
        });
    }
    Ok(BandStats { bands })
}

/// Subtract a per-band offset from every valid U16 sample, clamping at zero.
pub fn shift_values(r: &Raster, offsets: &[u16]) -> Result<Raster> {
    r.expect_dtype(DType::U16)?;
    if offsets.len() != r.bands() {
        return Err(Error::InvalidArgument(format!(
            "{} offsets for {} bands",
            offsets.len(),
            r.bands()
        )));
    }
    let n = r.pixels();
    let mut data = r.as_u16().unwrap().to_vec();
    for (b, &off) in offsets.iter().enumerate() {
        for p in (0..n).filter(|&p| r.is_valid(p)) {
            let s = &mut data[b * n + p];
            *s = s.saturating_sub(off);
        }
    }
    Raster::new(
        r.width(),
        r.height(),
        r.bands(),
        Samples::U16(data),
        r.validmask().map(<[bool]>::to_vec),
        r.geotransform(),
    )
}

/// Offset per band = histogram value at the lower `percentile`, rounded down.
pub fn estimate_shift_offsets(stats: &BandStats, percentile: f64) -> Result<Vec<u16>> {
    if !(0.0..=1.0).contains(&percentile) {
        return Err(Error::Range(format!("percentile {percentile} outside [0, 1]")));
    }
    if stats.bands.is_empty() {
        return Err(Error::Empty("no band statistics".into()));
    }
    stats
        .bands
        .iter()
        .map(|s| {
            let h = &s.histogram;
            let total: u64 = h.counts.iter().sum();
            if total == 0 {
                return Err(Error::Empty("histogram has no samples".into()));
            }
            let target = percentile * total as f64;
            let mut cum = 0.0;
            let mut value = s.max;
            for (i, &c) in h.counts.iter().enumerate() {
                let c = c as f64;
                if c > 0.0 && cum + c >= target {
                    let frac = (target - cum) / c;
                    value = h.lower + (i as f64 + frac) * h.bin_width;
                    break;
                }
                cum += c;
            }
            Ok(value.clamp(s.min, s.max).floor().clamp(0.0, u16::MAX as f64) as u16)
        })
        .collect()
}

/// Mark pixels where `mask` is true as nodata.
pub fn set_nodata_mask(r: &Raster, mask: &[bool]) -> Result<Raster> {
    if mask.len() != r.pixels() {
        return Err(Error::Dimension(format!(
            "mask has {} entries for {} pixels",
            mask.len(),
            r.pixels()
        )));
    }
    let valid = (0..r.pixels()).map(|p| r.is_valid(p) && !mask[p]).collect();
    r.clone().with_validmask(Some(valid))
}

/// U16 → F32 over the fixed range `[0, 65535] → [-1, 1]`.
pub fn rescale_unit(r: &Raster) -> Result<Raster> {
    r.expect_dtype(DType::U16)?;
    let data = r
        .as_u16()
        .unwrap()
        .iter()
        .map(|&v| (v as f64 / U16_HALF_RANGE - 1.0) as f32)
        .collect();
    Raster::new(
        r.width(),
        r.height(),
        r.bands(),
        Samples::F32(data),
        r.validmask().map(<[bool]>::to_vec),
        r.geotransform(),
    )
}

/// F32 in `[-1, 1]` → U16, the exact inverse of [`rescale_unit`] on its image.
pub fn rescale_back(r: &Raster) -> Result<Raster> {
    r.expect_dtype(DType::F32)?;
    let src = r.as_f32().unwrap();
    let mut data = Vec::with_capacity(src.len());
    for (i, &x) in src.iter().enumerate() {
        let x = x as f64;
        if !(-1.0 - RESCALE_SLACK..=1.0 + RESCALE_SLACK).contains(&x) {
            return Err(Error::Range(format!("sample {i} = {x} outside [-1, 1]")));
        }
        data.push(((x + 1.0) * U16_HALF_RANGE).round().clamp(0.0, 65535.0) as u16);
    }
    Raster::new(
        r.width(),
        r.height(),
        r.bands(),
        Samples::U16(data),
        r.validmask().map(<[bool]>::to_vec),
        r.geotransform(),
    )
}
