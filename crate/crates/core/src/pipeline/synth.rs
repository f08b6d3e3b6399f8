use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels::{builtin_schemes, RecodeMap};
use crate::raster::Raster;

const BANDS: usize = 6;

/// Procedural two-domain benchmark. Sources see class signatures plus noise
/// at a coarser resolution; targets see `gain·signature + bias`, blurred,
/// plus noise at full resolution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub seed: u64,
    pub tiles_per_domain: usize,
    pub tile_size: usize,
    pub classes: usize,
    /// `classes × 6` values in `[-1, 1]` space.
    pub signatures: Vec<Vec<f64>>,
    /// Relative area of each class.
    pub class_weights: Vec<f64>,
    /// Side of the jittered grid cells whose Voronoi regions carry one class each.
    pub region_size: usize,
    pub gain: Vec<f64>,
    pub bias: Vec<f64>,
    pub blur_radius: usize,
    pub noise_std: f64,
    /// Source pixels average `ratio × ratio` blocks of the scene.
    pub resolution_ratio: usize,
    /// Added to every stored source sample, as a sensor offset to be shifted away.
    pub source_offset: u16,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec::with_classes(17, 4)
    }
}

impl SynthSpec {
    pub fn with_classes(seed: u64, classes: usize) -> Self {
        let k = classes.max(1);
        let signatures = (0..k)
            .map(|c| {
                let level = if k == 1 {
                    0.0
                } else {
                    -0.18 + 0.36 * c as f64 / (k - 1) as f64
                };
                (0..BANDS)
                    .map(|b| level + 0.05 * (((b + c) % 3) as f64 - 1.0))
                    .collect()
            })
            .collect();
        SynthSpec {
            seed,
            tiles_per_domain: 200,
            tile_size: 64,
            classes,
            signatures,
            class_weights: vec![1.0; k],
            region_size: 32,
            gain: vec![0.8, 0.7, 1.2, 0.9, 0.75, 1.1],
            bias: vec![0.1, 0.08, 0.06, 0.1, 0.09, 0.07],
            blur_radius: 1,
            noise_std: 0.02,
            resolution_ratio: 2,
            source_offset: 5000,
        }
    }

    /// Unit gain, zero bias, no blur, no noise, equal resolution.
    pub fn identity_transform(mut self) -> Self {
        self.gain = vec![1.0; BANDS];
        self.bias = vec![0.0; BANDS];
        self.blur_radius = 0;
        self.noise_std = 0.0;
        self.resolution_ratio = 1;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.classes == 0 || self.classes > 8 {
            return bad(format!("classes must be in 1..=8, got {}", self.classes));
        }
        if self.tiles_per_domain == 0 {
            return bad("tiles_per_domain must be positive".into());
        }
        if self.tile_size == 0 || self.tile_size % 16 != 0 {
            return bad(format!("tile_size {} is not a positive multiple of 16", self.tile_size));
        }
        if self.signatures.len() != self.classes || self.signatures.iter().any(|s| s.len() != BANDS) {
            return bad(format!("signatures must be {} × {BANDS}", self.classes));
        }
        if self.signatures.iter().flatten().any(|v| !(-1.0..=1.0).contains(v)) {
            return bad("signatures must lie in [-1, 1]".into());
        }
        if self.class_weights.len() != self.classes || self.class_weights.iter().any(|w| !(*w > 0.0)) {
            return bad("class_weights must hold one positive weight per class".into());
        }
        if self.gain.len() != BANDS || self.bias.len() != BANDS {
            return bad(format!("gain and bias need {BANDS} entries"));
        }
        if self.gain.iter().any(|g| !(*g > 0.0)) {
            return bad("gains must be positive".into());
        }
        if !(self.noise_std >= 0.0) {
            return bad("noise_std must be ≥ 0".into());
        }
        if self.region_size == 0 || self.resolution_ratio == 0 {
            return bad("region_size and resolution_ratio must be positive".into());
        }
        Ok(())
    }

    /// Tile grid `(columns, rows)` of each scene: the most square exact factorization.
    pub fn grid(&self) -> (usize, usize) {
        let n = self.tiles_per_domain;
        let rows = (1..=n).filter(|r| n % r == 0 && r * r <= n).max().unwrap_or(1);
        (n / rows, rows)
    }
}

/// Two labelled scenes: source labels in NALCMS codes, target labels in CORINE codes.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthDataset {
    pub source_image: Raster,
    pub source_labels: Raster,
    pub target_image: Raster,
    pub target_labels: Raster,
    /// General-scheme code of each synthetic class.
    pub general_codes: Vec<u8>,
}

fn first_code_mapping_to(map: &RecodeMap, general: u8) -> Option<u8> {
    map.pairs().find(|&(_, g)| g == general).map(|(c, _)| c)
}

/// Class index per scene pixel from a jittered-grid Voronoi partition.
fn class_map(spec: &SynthSpec, w: usize, h: usize, rng: &mut ChaCha8Rng) -> Vec<u8> {
    let r = spec.region_size;
    let (cw, ch) = (w.div_ceil(r), h.div_ceil(r));
    let cells = cw * ch;
    let sites: Vec<(f64, f64)> = (0..cells)
        .map(|i| {
            let (cx, cy) = (i % cw, i / cw);
            (
                (cx * r) as f64 + rng.random::<f64>() * r as f64,
                (cy * r) as f64 + rng.random::<f64>() * r as f64,
            )
        })
        .collect();
    let total: f64 = spec.class_weights.iter().sum();
    let mut cum = 0.0;
    let mut bounds = Vec::with_capacity(spec.classes);
    for w in &spec.class_weights {
        cum += w / total;
        bounds.push(cum);
    }
    let mut class_of: Vec<u8> = (0..cells)
        .map(|i| {
            let q = (i as f64 + 0.5) / cells as f64;
            bounds.iter().position(|&b| q < b).unwrap_or(spec.classes - 1) as u8
        })
        .collect();
    class_of.shuffle(rng);

    let mut out = vec![0u8; w * h];
    for y in 0..h {
        for x in 0..w {
            let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
            let (cx, cy) = ((x / r) as isize, (y / r) as isize);
            let mut best = (f64::INFINITY, 0usize);
            for dy in -2..=2 {
                for dx in -2..=2 {
                    let (nx, ny) = (cx + dx, cy + dy);
                    if nx < 0 || ny < 0 || nx >= cw as isize || ny >= ch as isize {
                        continue;
                    }
                    let i = ny as usize * cw + nx as usize;
                    let d = (sites[i].0 - px).powi(2) + (sites[i].1 - py).powi(2);
                    if d < best.0 {
                        best = (d, i);
                    }
                }
            }
            out[y * w + x] = class_of[best.1];
        }
    }
    out
}

fn box_blur(plane: &[f64], w: usize, h: usize, radius: usize) -> Vec<f64> {
    if radius == 0 {
        return plane.to_vec();
    }
    let r = radius as isize;
    let mut out = vec![0.0; plane.len()];
    for y in 0..h as isize {
        for x in 0..w as isize {
            let (mut s, mut n) = (0.0, 0.0);
            for yy in (y - r).max(0)..=(y + r).min(h as isize - 1) {
                for xx in (x - r).max(0)..=(x + r).min(w as isize - 1) {
                    s += plane[yy as usize * w + xx as usize];
                    n += 1.0;
                }
            }
            out[y as usize * w + x as usize] = s / n;
        }
    }
    out
}

/// `[-1, 1]` value to a stored sample; saturates at the top of the range.
fn to_u16(v: f64, offset: u16) -> u16 {
    (((v.clamp(-1.0, 1.0) + 1.0) * 32767.5).round() as u16).saturating_add(offset)
}

pub fn synth_benchmark(spec: &SynthSpec) -> Result<SynthDataset> {
    spec.validate()?;
    let schemes = builtin_schemes();
    let mut general_codes = Vec::with_capacity(spec.classes);
    let mut source_codes = Vec::with_capacity(spec.classes);
    let mut target_codes = Vec::with_capacity(spec.classes);
    for entry in schemes.general.entries().iter().take(spec.classes) {
        let (Some(s), Some(t)) = (
            first_code_mapping_to(&schemes.nalcms_to_general, entry.code),
            first_code_mapping_to(&schemes.corine_to_general, entry.code),
        ) else {
            return Err(Error::Config(format!(
                "general class `{}` has no source or target code",
                entry.name
            )));
        };
        general_codes.push(entry.code);
        source_codes.push(s);
        target_codes.push(t);
    }

    let (cols, rows) = spec.grid();
    let (w, h) = (cols * spec.tile_size, rows * spec.tile_size);
    let n = w * h;
    let noise = Normal::new(0.0, spec.noise_std).map_err(|e| Error::Config(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let scene = |rng: &mut ChaCha8Rng, source: bool| -> (Raster, Vec<u8>) {
        let classes = class_map(spec, w, h, rng);
        let mut samples = Vec::with_capacity(BANDS * n);
        for b in 0..BANDS {
            let clean: Vec<f64> = classes.iter().map(|&c| spec.signatures[c as usize][b]).collect();
            let plane: Vec<f64> = if source {
                let r = spec.resolution_ratio;
                let (bw, bh) = (w.div_ceil(r), h.div_ceil(r));
                let mut block_mean = vec![0.0; bw * bh];
                let mut block_n = vec![0.0; bw * bh];
                for p in 0..n {
                    let i = (p / w / r) * bw + (p % w) / r;
                    block_mean[i] += clean[p];
                    block_n[i] += 1.0;
                }
                let block: Vec<f64> = block_mean
                    .iter()
                    .zip(&block_n)
                    .map(|(s, c)| s / c + noise.sample(rng))
                    .collect();
                (0..n).map(|p| block[(p / w / r) * bw + (p % w) / r]).collect()
            } else {
                let shifted: Vec<f64> = clean.iter().map(|v| spec.gain[b] * v + spec.bias[b]).collect();
                box_blur(&shifted, w, h, spec.blur_radius)
                    .into_iter()
                    .map(|v| v + noise.sample(rng))
                    .collect()
            };
            let offset = if source { spec.source_offset } else { 0 };
            samples.extend(plane.into_iter().map(|v| to_u16(v, offset)));
        }
        (Raster::from_u16(w, h, BANDS, samples).unwrap(), classes)
    };
    let (source_image, source_classes) = scene(&mut rng, true);
    let (target_image, target_classes) = scene(&mut rng, false);
    let label = |classes: Vec<u8>, codes: &[u8]| {
        Raster::from_u8(w, h, 1, classes.into_iter().map(|c| codes[c as usize]).collect())
    };
    Ok(SynthDataset {
        source_image,
        source_labels: label(source_classes, &source_codes)?,
        target_image,
        target_labels: label(target_classes, &target_codes)?,
        general_codes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(seed: u64) -> SynthSpec {
        SynthSpec {
            tiles_per_domain: 6,
            tile_size: 32,
            region_size: 8,
            ..SynthSpec::with_classes(seed, 4)
        }
    }

    #[test]
    fn same_seed_same_datasets() {
        assert_eq!(synth_benchmark(&small(3)).unwrap(), synth_benchmark(&small(3)).unwrap());
        assert_ne!(
            synth_benchmark(&small(3)).unwrap().target_image,
            synth_benchmark(&small(4)).unwrap().target_image
        );
    }

    #[test]
    fn grid_covers_exactly_the_requested_tiles() {
        for (n, grid) in [(200, (20, 10)), (6, (3, 2)), (7, (7, 1)), (1, (1, 1))] {
            let s = SynthSpec {
                tiles_per_domain: n,
                ..SynthSpec::default()
            };
            assert_eq!(s.grid(), grid);
        }
    }

    /// Sample values of each class, with the source offset removed.
    fn per_class_values(image: &Raster, labels: &Raster, offset: u16) -> Vec<Vec<u16>> {
        let codes = labels.as_u8().unwrap();
        let mut distinct: Vec<u8> = codes.to_vec();
        distinct.sort_unstable();
        distinct.dedup();
        distinct
            .iter()
            .map(|&c| {
                let mut v: Vec<u16> = (0..image.bands())
                    .flat_map(|b| (0..image.pixels()).map(move |p| (b, p)))
                    .filter(|&(_, p)| codes[p] == c)
                    .map(|(b, p)| image.as_u16().unwrap()[b * image.pixels() + p] - offset)
                    .collect();
                v.sort_unstable();
                v.dedup();
                v
            })
            .collect()
    }

    #[test]
    fn identity_transform_matches_domains_per_class() {
        let spec = small(5).identity_transform();
        let d = synth_benchmark(&spec).unwrap();
        assert_eq!(
            per_class_values(&d.source_image, &d.source_labels, spec.source_offset),
            per_class_values(&d.target_image, &d.target_labels, 0)
        );
    }

    #[test]
    fn class_areas_follow_the_weights() {
        let spec = SynthSpec {
            tiles_per_domain: 100,
            class_weights: vec![1.0, 2.0, 3.0, 4.0],
            ..SynthSpec::default()
        };
        let d = synth_benchmark(&spec).unwrap();
        let codes = d.source_labels.as_u8().unwrap();
        let map = builtin_schemes().nalcms_to_general;
        for (k, &g) in d.general_codes.iter().enumerate() {
            let n = codes.iter().filter(|&&c| map.get(c) == Some(g)).count();
            let frac = n as f64 / codes.len() as f64;
            assert!((frac - (k + 1) as f64 / 10.0).abs() < 0.02, "class {k}: {frac}");
        }
    }

    #[test]
    fn rejects_invalid_specs() {
        let bad = [
            SynthSpec {
                classes: 9,
                ..SynthSpec::default()
            },
            SynthSpec {
                gain: vec![1.0, 1.0, 0.0, 1.0, 1.0, 1.0],
                ..SynthSpec::default()
            },
            SynthSpec {
                noise_std: -0.1,
                ..SynthSpec::default()
            },
            SynthSpec {
                tile_size: 40,
                ..SynthSpec::default()
            },
        ];
        for s in bad {
            assert!(synth_benchmark(&s).is_err());
        }
    }

    #[test]
    fn labels_use_native_scheme_codes() {
        let d = synth_benchmark(&small(1)).unwrap();
        let b = builtin_schemes();
        assert!(d.source_labels.as_u8().unwrap().iter().all(|&c| b.nalcms.contains(c)));
        assert!(d.target_labels.as_u8().unwrap().iter().all(|&c| b.corine.contains(c)));
        assert_eq!(d.general_codes, vec![1, 2, 3, 4]);
    }
}
