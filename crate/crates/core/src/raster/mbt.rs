//! MBT raster container, little-endian:
//!
//! ```text
//! offset  size  field
//!      0     4  magic "MBT1"
//!      4     4  u32 width
//!      8     4  u32 height
//!     12     2  u16 bands
//!     14     2  u16 dtype (0 = U8, 1 = U16, 2 = F32)
//!     16     2  u16 flags (bit 0: validity mask present)
//!     18     2  u16 reserved = 0
//!     20    48  6 × f64 (origin_x, origin_y, pixel_size_x, pixel_size_y, 0, 0)
//!     68     …  band-sequential samples
//!      …   w·h  validity mask bytes (0 = invalid, 1 = valid) if flag bit 0
//! ```

use std::fs;
use std::path::Path;

use super::{DType, GeoTransform, Raster, Samples};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"MBT1";
pub const HEADER_LEN: usize = 68;

const FLAG_MASK: u16 = 1;

pub fn encode(r: &Raster) -> Vec<u8> {
    let payload = r.pixels() * r.bands() * r.dtype().size();
    let mask_len = r.validmask().map_or(0, |_| r.pixels());
    let mut out = Vec::with_capacity(HEADER_LEN + payload + mask_len);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(r.width() as u32).to_le_bytes());
    out.extend_from_slice(&(r.height() as u32).to_le_bytes());
    out.extend_from_slice(&(r.bands() as u16).to_le_bytes());
    out.extend_from_slice(&r.dtype().code().to_le_bytes());
    let flags = if r.validmask().is_some() { FLAG_MASK } else { 0 };
    out.extend_from_slice(&flags.to_le_bytes());
    out.extend_from_slice(&0u16.to_le_bytes());
    let g = r.geotransform();
    for v in [g.origin_x, g.origin_y, g.pixel_size_x, g.pixel_size_y, 0.0, 0.0] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    match r.samples() {
        Samples::U8(v) => out.extend_from_slice(v),
        Samples::U16(v) => v.iter().for_each(|s| out.extend_from_slice(&s.to_le_bytes())),
        Samples::F32(v) => v.iter().for_each(|s| out.extend_from_slice(&s.to_bits().to_le_bytes())),
    }
    if let Some(m) = r.validmask() {
        out.extend(m.iter().map(|&b| b as u8));
    }
    out
}

pub fn decode(bytes: &[u8]) -> Result<Raster> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(Error::Format("missing MBT1 magic".into()));
    }
    if bytes.len() < HEADER_LEN {
        return Err(Error::Corrupt(format!(
            "header truncated at {} of {HEADER_LEN} bytes",
            bytes.len()
        )));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()) as usize;
    let u16_at = |o: usize| u16::from_le_bytes(bytes[o..o + 2].try_into().unwrap());
    let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());

    let (width, height, bands) = (u32_at(4), u32_at(8), u16_at(12) as usize);
    let dtype = DType::from_code(u16_at(14))?;
    let flags = u16_at(16);
    if flags & !FLAG_MASK != 0 {
        return Err(Error::Unsupported(format!("flag bits {flags:#06x}")));
    }
    if u16_at(18) != 0 {
        return Err(Error::Format("reserved header field is nonzero".into()));
    }
    let g: Vec<f64> = (0..6).map(|i| f64_at(20 + 8 * i)).collect();
    if g[4].to_bits() != 0 || g[5].to_bits() != 0 {
        return Err(Error::Format("geotransform rotation terms must be zero".into()));
    }
    let geotransform = GeoTransform {
        origin_x: g[0],
        origin_y: g[1],
        pixel_size_x: g[2],
        pixel_size_y: g[3],
    };

    let pixels = width
        .checked_mul(height)
        .ok_or_else(|| Error::Corrupt("pixel count overflows".into()))?;
    let payload = pixels
        .checked_mul(bands)
        .and_then(|n| n.checked_mul(dtype.size()))
        .ok_or_else(|| Error::Corrupt("payload size overflows".into()))?;
    let has_mask = flags & FLAG_MASK != 0;
    let expected = HEADER_LEN + payload + if has_mask { pixels } else { 0 };
    if bytes.len() < expected {
        return Err(Error::Corrupt(format!(
            "payload truncated: {} of {expected} bytes",
            bytes.len()
        )));
    }
    if bytes.len() > expected {
        return Err(Error::Corrupt(format!(
            "{} trailing bytes after payload",
            bytes.len() - expected
        )));
    }

    let body = &bytes[HEADER_LEN..HEADER_LEN + payload];
    let samples = match dtype {
        DType::U8 => Samples::U8(body.to_vec()),
        DType::U16 => Samples::U16(
            body.chunks_exact(2)
                .map(|c| u16::from_le_bytes([c[0], c[1]]))
                .collect(),
        ),
        DType::F32 => Samples::F32(
            body.chunks_exact(4)
                .map(|c| f32::from_bits(u32::from_le_bytes(c.try_into().unwrap())))
                .collect(),
        ),
    };
    let validmask = if has_mask {
        let raw = &bytes[HEADER_LEN + payload..];
        let mut m = Vec::with_capacity(pixels);
        for (i, &b) in raw.iter().enumerate() {
            match b {
                0 => m.push(false),
                1 => m.push(true),
                _ => return Err(Error::Corrupt(format!("mask byte {b} at pixel {i}"))),
            }
        }
        Some(m)
    } else {
        None
    };
    Raster::new(width, height, bands, samples, validmask, geotransform)
        .map_err(|e| Error::Format(e.to_string()))
}

pub fn read(path: &Path) -> Result<Raster> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}

pub fn write(r: &Raster, path: &Path) -> Result<()> {
    fs::write(path, encode(r)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal() -> Vec<u8> {
        let mut b = Vec::new();
        b.extend_from_slice(b"MBT1");
        b.extend_from_slice(&1u32.to_le_bytes());
        b.extend_from_slice(&1u32.to_le_bytes());
        b.extend_from_slice(&1u16.to_le_bytes());
        b.extend_from_slice(&1u16.to_le_bytes());
        b.extend_from_slice(&0u16.to_le_bytes());
        b.extend_from_slice(&0u16.to_le_bytes());
        for v in [0.0f64, 0.0, 30.0, -30.0, 0.0, 0.0] {
            b.extend_from_slice(&v.to_le_bytes());
        }
        b.extend_from_slice(&7u16.to_le_bytes());
        b
    }

    #[test]
    fn smallest_file_decodes() {
        let r = decode(&minimal()).unwrap();
        assert_eq!((r.width(), r.height(), r.bands()), (1, 1, 1));
        assert_eq!(r.as_u16().unwrap(), &[7]);
        assert!(r.validmask().is_none());
        assert_eq!(encode(&r), minimal());
    }

    #[test]
    fn bad_magic_is_a_format_error() {
        let mut b = minimal();
        b[..4].copy_from_slice(b"XXXX");
        assert!(matches!(decode(&b), Err(Error::Format(_))));
    }

    #[test]
    fn truncation_and_unknown_dtype() {
        let b = minimal();
        assert!(matches!(decode(&b[..b.len() - 1]), Err(Error::Corrupt(_))));
        assert!(matches!(decode(&b[..40]), Err(Error::Corrupt(_))));
        let mut d = b.clone();
        d[14] = 9;
        assert!(matches!(decode(&d), Err(Error::Unsupported(_))));
        let mut t = b;
        t.push(0);
        assert!(matches!(decode(&t), Err(Error::Corrupt(_))));
    }

    #[test]
    fn encoded_size_for_masked_six_band_raster() {
        let r = Raster::from_u16(2, 2, 6, vec![1; 24])
            .unwrap()
            .with_validmask(Some(vec![true, false, true, true]))
            .unwrap();
        let bytes = encode(&r);
        assert_eq!(bytes.len(), HEADER_LEN + 2 * 2 * 6 * 2 + 4);
        assert_eq!(decode(&bytes).unwrap(), r);
    }

    #[test]
    fn invalid_mask_byte_is_corrupt() {
        let r = Raster::from_u8(1, 1, 1, vec![3])
            .unwrap()
            .with_validmask(Some(vec![true]))
            .unwrap();
        let mut bytes = encode(&r);
        *bytes.last_mut().unwrap() = 2;
        assert!(matches!(decode(&bytes), Err(Error::Corrupt(_))));
    }
}
