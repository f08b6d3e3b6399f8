//! Source→target style transfer: per-band moment matching ("stats" mode) and
//! an adversarially trained AdaIN generator ("gan" mode), plus the mixed
//! original + stylized training manifest.

mod manifest;
mod nets;
mod train;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Tensor;
use crate::raster::{rescale_back, DType, Raster, Samples};

pub use manifest::{
    build_mixed_dataset, read_manifest, validate_manifest, write_manifest, ManifestRecord, Origin,
};
pub use nets::{style_batch, Discriminator, Generator, BANDS, DISCRIMINATOR_KIND, GENERATOR_KIND, STYLE_DIM};
pub use train::{train_style, StyleLogRow, StyleModels, StyleTrainConfig};

/// Added to the source std in stats mode.
pub const STATS_EPS: f64 = 1e-8;

/// Per-band mean and population std over the valid pixels of a domain, in
/// `[-1, 1]` space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainStyle {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl DomainStyle {
    pub fn bands(&self) -> usize {
        self.mean.len()
    }
}

fn check_f32(t: &Raster) -> Result<&[f32]> {
    t.expect_dtype(DType::F32)?;
    Ok(t.as_f32().unwrap())
}

/// Style of a tile set; independent of tile order.
pub fn extract_domain_style(tiles: &[Raster]) -> Result<DomainStyle> {
    let first = tiles
        .first()
        .ok_or_else(|| Error::Empty("no tiles to extract a style from".into()))?;
    let bands = first.bands();
    let mut sum = vec![0.0f64; bands];
    let mut count = 0u64;
    for t in tiles {
        if t.bands() != bands {
            return Err(Error::Dimension(format!(
                "tile has {} bands, expected {bands}",
                t.bands()
            )));
        }
        let data = check_f32(t)?;
        let n = t.pixels();
        for (b, s) in sum.iter_mut().enumerate() {
            *s += (0..n)
                .filter(|&p| t.is_valid(p))
                .map(|p| data[b * n + p] as f64)
                .sum::<f64>();
        }
        count += t.valid_count() as u64;
    }
    if count == 0 {
        return Err(Error::Empty("no valid pixels in the tile set".into()));
    }
    let mean: Vec<f64> = sum.iter().map(|s| s / count as f64).collect();
    let mut sq = vec![0.0f64; bands];
    for t in tiles {
        let data = t.as_f32().unwrap();
        let n = t.pixels();
        for (b, s) in sq.iter_mut().enumerate() {
            *s += (0..n)
                .filter(|&p| t.is_valid(p))
                .map(|p| (data[b * n + p] as f64 - mean[b]).powi(2))
                .sum::<f64>();
        }
    }
    Ok(DomainStyle {
        mean,
        std: sq.iter().map(|s| (s / count as f64).sqrt()).collect(),
    })
}

fn map_valid(tile: &Raster, f: impl Fn(usize, f64) -> f64) -> Result<Raster> {
    let data = check_f32(tile)?;
    let n = tile.pixels();
    let out = data
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            if tile.is_valid(i % n) {
                f(i / n, v as f64) as f32
            } else {
                v
            }
        })
        .collect();
    Raster::new(
        tile.width(),
        tile.height(),
        tile.bands(),
        Samples::F32(out),
        tile.validmask().map(<[bool]>::to_vec),
        tile.geotransform(),
    )
}

fn check_styles(tile: &Raster, a: &DomainStyle, b: &DomainStyle) -> Result<()> {
    if a.bands() != tile.bands() || b.bands() != tile.bands() {
        return Err(Error::Dimension(format!(
            "tile has {} bands, styles have {} and {}",
            tile.bands(),
            a.bands(),
            b.bands()
        )));
    }
    Ok(())
}

/// Per band `σ_T·(x − μ_S)/(σ_S + ε) + μ_T`, clamped to `[-1, 1]`, on valid pixels.
pub fn stylize_stats_mode(tile: &Raster, source: &DomainStyle, target: &DomainStyle) -> Result<Raster> {
    check_styles(tile, source, target)?;
    map_valid(tile, |b, x| {
        (target.std[b] * (x - source.mean[b]) / (source.std[b] + STATS_EPS) + target.mean[b]).clamp(-1.0, 1.0)
    })
}

/// Inverse of [`stylize_stats_mode`] for samples that were not clamped.
pub fn unstylize_stats_mode(tile: &Raster, source: &DomainStyle, target: &DomainStyle) -> Result<Raster> {
    check_styles(tile, source, target)?;
    if let Some(b) = (0..target.bands()).find(|&b| target.std[b] <= 0.0) {
        return Err(Error::Range(format!("target std of band {b} is zero")));
    }
    map_valid(tile, |b, y| {
        ((y - target.mean[b]) * (source.std[b] + STATS_EPS) / target.std[b] + source.mean[b]).clamp(-1.0, 1.0)
    })
}

/// How [`stylize_dataset`] transforms each tile.
#[derive(Clone, Debug)]
pub enum StylizeMode<'a> {
    Stats {
        source: &'a DomainStyle,
        target: &'a DomainStyle,
    },
    Gan {
        generator: &'a Generator,
        target: &'a DomainStyle,
    },
}

/// Stylize F32 tiles and return them as U16. Invalid pixels keep their
/// input values; masks are carried over.
pub fn stylize_dataset(tiles: &[Raster], mode: &StylizeMode<'_>) -> Result<Vec<Raster>> {
    tiles
        .par_iter()
        .map(|t| {
            let styled = match mode {
                StylizeMode::Stats { source, target } => stylize_stats_mode(t, source, target)?,
                StylizeMode::Gan { generator, target } => stylize_gan(t, generator, target)?,
            };
            rescale_back(&styled)
        })
        .collect()
}

/// One tile through the generator; invalid pixels pass through unchanged.
pub fn stylize_gan(tile: &Raster, generator: &Generator, target: &DomainStyle) -> Result<Raster> {
    let data = check_f32(tile)?;
    let x = Tensor::new(&[1, tile.bands(), tile.height(), tile.width()], data.to_vec())?;
    let y = generator.apply(&x, target)?;
    let n = tile.pixels();
    let out = y
        .data()
        .iter()
        .zip(data)
        .enumerate()
        .map(|(i, (&g, &v))| if tile.is_valid(i % n) { g } else { v })
        .collect();
    Raster::new(
        tile.width(),
        tile.height(),
        tile.bands(),
        Samples::F32(out),
        tile.validmask().map(<[bool]>::to_vec),
        tile.geotransform(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::rescale_unit;

    fn tile(values: Vec<f32>, bands: usize, w: usize) -> Raster {
        let h = values.len() / bands / w;
        Raster::from_f32(w, h, bands, values).unwrap()
    }

    #[test]
    fn style_examples() {
        let s = extract_domain_style(&[tile(vec![0.2; 12], 3, 2)]).unwrap();
        for b in 0..3 {
            assert!((s.mean[b] - 0.2).abs() < 1e-7);
            assert!(s.std[b] < 1e-7);
        }
        let a = tile(vec![-0.5; 4], 1, 2);
        let b = tile(vec![0.5; 4], 1, 2);
        let s = extract_domain_style(&[a.clone(), b.clone()]).unwrap();
        assert_eq!((s.mean[0], s.std[0]), (0.0, 0.5));
        assert_eq!(s, extract_domain_style(&[b, a]).unwrap());
        assert!(extract_domain_style(&[]).is_err());
    }

    #[test]
    fn style_skips_invalid_pixels() {
        let t = tile(vec![0.1, 0.3, 0.9, 0.9], 1, 4)
            .with_validmask(Some(vec![true, true, false, false]))
            .unwrap();
        let s = extract_domain_style(&[t]).unwrap();
        assert!((s.mean[0] - 0.2).abs() < 1e-7);
    }

    #[test]
    fn stats_mode_fixed_point_and_identity() {
        let src = DomainStyle {
            mean: vec![0.1, -0.2],
            std: vec![0.2, 0.1],
        };
        let tgt = DomainStyle {
            mean: vec![-0.3, 0.4],
            std: vec![0.05, 0.3],
        };
        let at_mean = tile(vec![0.1, 0.1, -0.2, -0.2], 2, 2);
        let out = stylize_stats_mode(&at_mean, &src, &tgt).unwrap();
        assert_eq!(out.as_f32().unwrap(), &[-0.3, -0.3, 0.4, 0.4]);

        let x = tile(vec![0.0, 0.3, -0.1, -0.25], 2, 2);
        let same = stylize_stats_mode(&x, &src, &src).unwrap();
        for (a, b) in same.as_f32().unwrap().iter().zip(x.as_f32().unwrap()) {
            assert!((a - b).abs() < 1e-6);
        }
        let back = unstylize_stats_mode(&stylize_stats_mode(&x, &src, &tgt).unwrap(), &src, &tgt).unwrap();
        for (a, b) in back.as_f32().unwrap().iter().zip(x.as_f32().unwrap()) {
            assert!((a - b).abs() < 1e-6);
        }
        assert!(stylize_stats_mode(&tile(vec![0.0; 4], 1, 2), &src, &tgt).is_err());
    }

    #[test]
    fn stats_mode_equal_styles_round_trip_exactly() {
        let raw: Vec<u16> = (0..6 * 64).map(|i| (i * 97 % 40000 + 9000) as u16).collect();
        let u = Raster::from_u16(8, 8, 6, raw).unwrap();
        let f = rescale_unit(&u).unwrap();
        let s = extract_domain_style(std::slice::from_ref(&f)).unwrap();
        let out = stylize_dataset(
            std::slice::from_ref(&f),
            &StylizeMode::Stats {
                source: &s,
                target: &s,
            },
        )
        .unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0], u);
    }

    #[test]
    fn stats_mode_preserves_masks_and_invalid_values() {
        let t = tile(vec![0.5, 0.7], 1, 2)
            .with_validmask(Some(vec![true, false]))
            .unwrap();
        let src = DomainStyle {
            mean: vec![0.0],
            std: vec![1.0],
        };
        let tgt = DomainStyle {
            mean: vec![0.1],
            std: vec![0.5],
        };
        let out = stylize_stats_mode(&t, &src, &tgt).unwrap();
        assert_eq!(out.validmask(), t.validmask());
        assert_eq!(out.as_f32().unwrap()[1], 0.7);
        assert!((out.as_f32().unwrap()[0] - 0.35).abs() < 1e-6);
    }
}
