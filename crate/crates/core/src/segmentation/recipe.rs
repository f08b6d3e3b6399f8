use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{DType, Raster, Samples};

use super::model::INPUT_BANDS;

/// Per-band mean over every valid pixel of the listed tile sets, in `[-1, 1]` space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BandMeans {
    pub means: Vec<f64>,
}

impl BandMeans {
    pub fn zeros() -> Self {
        BandMeans {
            means: vec![0.0; INPUT_BANDS],
        }
    }

    pub fn negated(&self) -> Self {
        BandMeans {
            means: self.means.iter().map(|m| -m).collect(),
        }
    }
}

pub fn compute_band_means(sets: &[&[Raster]]) -> Result<BandMeans> {
    let mut sum = [0.0f64; INPUT_BANDS];
    let mut count = 0u64;
    for t in sets.iter().flat_map(|s| s.iter()) {
        if t.bands() != INPUT_BANDS {
            return Err(Error::Dimension(format!(
                "tile has {} bands, expected {INPUT_BANDS}",
                t.bands()
            )));
        }
        t.expect_dtype(DType::F32)?;
        let data = t.as_f32().unwrap();
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
        return Err(Error::Empty("no valid pixels to average".into()));
    }
    Ok(BandMeans {
        means: sum.iter().map(|s| s / count as f64).collect(),
    })
}

/// Subtract `means[b]` from every sample of band `b`; the mask is untouched.
pub fn normalize(tile: &Raster, means: &BandMeans) -> Result<Raster> {
    if tile.bands() != means.means.len() {
        return Err(Error::Dimension(format!(
            "tile has {} bands, means have {}",
            tile.bands(),
            means.means.len()
        )));
    }
    tile.expect_dtype(DType::F32)?;
    let n = tile.pixels();
    let out = tile
        .as_f32()
        .unwrap()
        .iter()
        .enumerate()
        .map(|(i, &v)| (v as f64 - means.means[i / n]) as f32)
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

/// Horizontal flip (optional) followed by `quarter_turns` clockwise rotations.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Transform {
    pub quarter_turns: u8,
    pub flip: bool,
}

impl Transform {
    pub const IDENTITY: Transform = Transform {
        quarter_turns: 0,
        flip: false,
    };

    /// Uniform over the eight rotation × flip combinations.
    pub fn random(rng: &mut impl Rng) -> Self {
        let k = rng.random_range(0..8u8);
        Transform {
            quarter_turns: k % 4,
            flip: k >= 4,
        }
    }

    pub fn output_size(self, w: usize, h: usize) -> (usize, usize) {
        if self.quarter_turns % 2 == 1 {
            (h, w)
        } else {
            (w, h)
        }
    }

    /// Destination of pixel `(x, y)` in a `w × h` plane.
    pub fn map(self, x: usize, y: usize, w: usize, h: usize) -> (usize, usize) {
        let (mut x, mut y, mut w, mut h) = (x, y, w, h);
        if self.flip {
            x = w - 1 - x;
        }
        for _ in 0..self.quarter_turns % 4 {
            (x, y) = (h - 1 - y, x);
            (w, h) = (h, w);
        }
        (x, y)
    }

    pub fn apply(self, r: &Raster) -> Result<Raster> {
        let (w, h) = (r.width(), r.height());
        let (ow, _) = self.output_size(w, h);
        let n = w * h;
        let dest: Vec<usize> = (0..n)
            .map(|p| {
                let (x, y) = self.map(p % w, p / w, w, h);
                y * ow + x
            })
            .collect();
        fn permute<T: Copy + Default>(src: &[T], dest: &[usize]) -> Vec<T> {
            let n = dest.len();
            let mut out = vec![T::default(); src.len()];
            for (i, &v) in src.iter().enumerate() {
                out[(i / n) * n + dest[i % n]] = v;
            }
            out
        }
        let samples = match r.samples() {
            Samples::U8(v) => Samples::U8(permute(v, &dest)),
            Samples::U16(v) => Samples::U16(permute(v, &dest)),
            Samples::F32(v) => Samples::F32(permute(v, &dest)),
        };
        let (ow, oh) = self.output_size(w, h);
        Raster::new(
            ow,
            oh,
            r.bands(),
            samples,
            r.validmask().map(|m| permute(m, &dest)),
            r.geotransform(),
        )
    }
}

/// Apply one random [`Transform`] identically to an image and its labels.
pub fn augment(image: &Raster, labels: &Raster, rng: &mut impl Rng) -> Result<(Raster, Raster, Transform)> {
    if (image.width(), image.height()) != (labels.width(), labels.height()) {
        return Err(Error::Dimension(format!(
            "image is {}x{}, labels are {}x{}",
            image.width(),
            image.height(),
            labels.width(),
            labels.height()
        )));
    }
    let t = Transform::random(rng);
    Ok((t.apply(image)?, t.apply(labels)?, t))
}
