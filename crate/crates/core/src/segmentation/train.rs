use std::path::Path;

use log::{debug, info};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::model::{Segmenter, CHECKPOINT_KIND, INPUT_BANDS, NUM_CLASSES};
use super::recipe::{normalize, BandMeans, Transform};
use crate::error::{Error, Result};
use crate::numerics::{AdamConfig, AdamState, PolySchedule, Tape, Tensor};
use crate::raster::{DType, Raster, Samples, LABEL_NODATA};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SegTrainConfig {
    pub batch: usize,
    pub steps: u64,
    pub base_lr: f64,
    pub weight_decay: f64,
    pub power: f64,
    pub augment: bool,
    pub seed: u64,
}

impl Default for SegTrainConfig {
    fn default() -> Self {
        SegTrainConfig {
            batch: 8,
            steps: 2000,
            base_lr: 1e-4,
            weight_decay: 5e-4,
            power: 0.9,
            augment: true,
            seed: 17,
        }
    }
}

impl SegTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch == 0 || self.steps == 0 {
            return Err(Error::Config("segmentation training needs batch ≥ 1 and steps ≥ 1".into()));
        }
        if !(self.base_lr.is_finite() && self.base_lr > 0.0) {
            return Err(Error::Config(format!("base_lr must be positive, got {}", self.base_lr)));
        }
        if !(self.weight_decay >= 0.0 && self.power > 0.0) {
            return Err(Error::Config("weight_decay must be ≥ 0 and power > 0".into()));
        }
        Ok(())
    }
}

/// One training pair: an F32 `[-1, 1]` image and a U8 map of class indices.
#[derive(Clone, Debug, PartialEq)]
pub struct SegSample {
    pub image: Raster,
    pub labels: Raster,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegLogRow {
    pub step: u64,
    pub lr: f64,
    pub loss: f64,
}

impl SegLogRow {
    pub const CSV_HEADER: &'static str = "step,lr,loss";

    pub fn csv(&self) -> String {
        format!("{},{},{}", self.step, self.lr, self.loss)
    }
}

pub fn write_seg_log(rows: &[SegLogRow], path: &Path) -> Result<()> {
    let mut s = String::from(SegLogRow::CSV_HEADER);
    s.push('\n');
    for r in rows {
        s.push_str(&r.csv());
        s.push('\n');
    }
    std::fs::write(path, s).map_err(|e| Error::io(path, e))
}

/// Class index per pixel with invalid pixels folded into nodata.
fn targets_of(labels: &Raster) -> Result<Vec<u8>> {
    labels.expect_dtype(DType::U8)?;
    let codes = labels.as_u8().unwrap();
    codes
        .iter()
        .enumerate()
        .map(|(p, &c)| {
            if !labels.label_valid(p) {
                Ok(LABEL_NODATA)
            } else if (c as usize) < NUM_CLASSES {
                Ok(c)
            } else {
                Err(Error::UnknownCode { code: c, pixel: p })
            }
        })
        .collect()
}

fn check_samples(samples: &[SegSample]) -> Result<(usize, usize)> {
    let first = samples
        .first()
        .ok_or_else(|| Error::Empty("no training samples".into()))?;
    let (w, h) = (first.image.width(), first.image.height());
    for (i, s) in samples.iter().enumerate() {
        if s.image.bands() != INPUT_BANDS || s.labels.bands() != 1 {
            return Err(Error::Dimension(format!(
                "sample {i}: {} image bands and {} label bands",
                s.image.bands(),
                s.labels.bands()
            )));
        }
        if (s.image.width(), s.image.height(), s.labels.width(), s.labels.height()) != (w, h, w, h) {
            return Err(Error::Dimension(format!("sample {i} differs in size from sample 0")));
        }
        s.image.expect_dtype(DType::F32)?;
        targets_of(&s.labels)?;
    }
    if w % 16 != 0 || h % 16 != 0 || w != h {
        return Err(Error::Dimension(format!(
            "training tiles must be square with a side divisible by 16, got {w}x{h}"
        )));
    }
    Ok((w, h))
}

fn prepare(sample: &SegSample, means: &BandMeans, t: Transform) -> Result<(Vec<f32>, Vec<u8>)> {
    let img = t.apply(&normalize(&sample.image, means)?)?;
    let labels = t.apply(&sample.labels)?;
    Ok((img.into_samples().into_f32()?, targets_of(&labels)?))
}

fn save(seg: &Segmenter, path: &Path, cfg: &SegTrainConfig, means: &BandMeans, step: u64) -> Result<()> {
    seg.params.save(
        path,
        CHECKPOINT_KIND,
        json!({ "config": cfg, "means": means, "step": step }),
    )
}

/// Adam with L2 weight decay and polynomial learning-rate decay.
///
/// Each epoch visits the samples in a seeded random order; with `augment`,
/// every draw gets its own seeded rotation/flip. Nodata labels do not
/// contribute to the loss. A non-finite loss aborts after writing
/// `checkpoint` with a `.diagnostic` suffix.
pub fn train_seg(
    samples: &[SegSample],
    cfg: &SegTrainConfig,
    means: &BandMeans,
    checkpoint: Option<&Path>,
) -> Result<(Segmenter, Vec<SegLogRow>)> {
    cfg.validate()?;
    let (w, h) = check_samples(samples)?;
    let mut seg = Segmenter::new(NUM_CLASSES, cfg.seed);
    let mut adam = AdamState::new(
        &seg.params,
        AdamConfig {
            weight_decay: cfg.weight_decay,
            ..AdamConfig::default()
        },
    );
    let schedule = PolySchedule::new(cfg.base_lr, cfg.steps, cfg.power)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = Vec::new();
    let mut log = Vec::with_capacity(cfg.steps as usize);

    for step in 0..cfg.steps {
        let picks: Vec<(usize, Transform)> = (0..cfg.batch)
            .map(|_| {
                if order.is_empty() {
                    order = (0..samples.len()).collect();
                    order.shuffle(&mut rng);
                }
                let i = order.pop().unwrap();
                let t = if cfg.augment {
                    Transform::random(&mut rng)
                } else {
                    Transform::IDENTITY
                };
                (i, t)
            })
            .collect();
        let prepared = picks
            .par_iter()
            .map(|&(i, t)| prepare(&samples[i], means, t))
            .collect::<Result<Vec<_>>>()?;
        let mut x = Vec::with_capacity(cfg.batch * INPUT_BANDS * w * h);
        let mut targets = Vec::with_capacity(cfg.batch * w * h);
        for (img, lab) in prepared {
            x.extend_from_slice(&img);
            targets.extend_from_slice(&lab);
        }
        if targets.iter().all(|&t| t == LABEL_NODATA) {
            debug!("segmentation step {step}: batch has no labelled pixels, skipped");
            continue;
        }
        let lr = schedule.lr(step)?;
        let mut tape = Tape::new();
        let vars = seg.params.bind(&mut tape, true);
        let xv = tape.input(Tensor::new(&[cfg.batch, INPUT_BANDS, h, w], x)?);
        let logits = seg.forward(&mut tape, &vars, xv)?;
        let loss = tape.softmax_xent(logits, &targets, LABEL_NODATA)?;
        let value = tape.value(loss).item() as f64;
        if !value.is_finite() {
            if let Some(path) = checkpoint {
                save(&seg, &path.with_extension("diagnostic.ckpt"), cfg, means, step)?;
            }
            return Err(Error::NonFinite(format!("segmentation loss at step {step}")));
        }
        let grads = tape.backward(loss)?;
        adam.step(&mut seg.params, &grads.collect(&vars), lr)?;
        if step % 100 == 0 {
            info!("segmentation step {step}: lr {lr:.3e} loss {value:.4}");
        }
        log.push(SegLogRow { step, lr, loss: value });
    }
    if let Some(path) = checkpoint {
        save(&seg, path, cfg, means, cfg.steps)?;
    }
    Ok((seg, log))
}

/// Reload a checkpoint written by [`train_seg`] with its band means.
pub fn load_segmenter(path: &Path) -> Result<(Segmenter, BandMeans)> {
    let (kind, meta, params) = crate::numerics::ParamSet::load(path)?;
    if kind != CHECKPOINT_KIND {
        return Err(Error::Format(format!(
            "{}: expected a `{CHECKPOINT_KIND}` checkpoint, found `{kind}`",
            path.display()
        )));
    }
    let means: BandMeans = serde_json::from_value(meta["means"].clone())?;
    Ok((Segmenter::from_params(params)?, means))
}

/// Per-pixel argmax class index; pixels invalid in the input become nodata.
/// Tiles are processed one at a time, so the result is independent of how
/// the tile list is split.
pub fn infer(seg: &Segmenter, tiles: &[Raster], means: &BandMeans) -> Result<Vec<Raster>> {
    tiles.par_iter().map(|t| infer_tile(seg, t, means)).collect()
}

fn infer_tile(seg: &Segmenter, tile: &Raster, means: &BandMeans) -> Result<Raster> {
    if tile.bands() != INPUT_BANDS {
        return Err(Error::Dimension(format!(
            "tile has {} bands, expected {INPUT_BANDS}",
            tile.bands()
        )));
    }
    let (w, h) = (tile.width(), tile.height());
    let n = w * h;
    let out = if tile.valid_count() == 0 {
        vec![LABEL_NODATA; n]
    } else {
        let x = normalize(tile, means)?.into_samples().into_f32()?;
        let logits = seg.logits(&Tensor::new(&[1, INPUT_BANDS, h, w], x)?)?;
        let l = logits.data();
        let k = seg.classes();
        (0..n)
            .map(|p| {
                if !tile.is_valid(p) {
                    return LABEL_NODATA;
                }
                let mut best = 0;
                for c in 1..k {
                    if l[c * n + p] > l[best * n + p] {
                        best = c;
                    }
                }
                best as u8
            })
            .collect()
    };
    Raster::new(w, h, 1, Samples::U8(out), None, tile.geotransform())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    /// Four classes on a 2×2 block layout; each class has its own spectrum.
    fn separable(n: usize, seed: u64) -> Vec<SegSample> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sig = [-0.6f32, -0.2, 0.2, 0.6];
        (0..n)
            .map(|_| {
                let s = 16;
                let split = rng.random_range(4..12);
                let labels: Vec<u8> = (0..s * s)
                    .map(|p| ((p % s >= split) as u8) + 2 * ((p / s >= split) as u8))
                    .collect();
                let mut img = Vec::with_capacity(6 * s * s);
                for b in 0..6 {
                    for &c in &labels {
                        let v = if b % 2 == 0 { sig[c as usize] } else { -sig[c as usize] };
                        img.push(v + rng.random_range(-0.05..0.05));
                    }
                }
                SegSample {
                    image: Raster::from_f32(s, s, 6, img).unwrap(),
                    labels: Raster::from_u8(s, s, 1, labels).unwrap(),
                }
            })
            .collect()
    }

    fn quick(steps: u64) -> SegTrainConfig {
        SegTrainConfig {
            batch: 4,
            steps,
            base_lr: 1e-3,
            seed: 7,
            ..SegTrainConfig::default()
        }
    }

    #[test]
    fn learns_a_separable_dataset() {
        let data = separable(16, 7);
        let (seg, log) = train_seg(&data, &quick(150), &BandMeans::zeros(), None).unwrap();
        assert!(log.last().unwrap().loss < log[0].loss);
        let images: Vec<Raster> = data.iter().map(|s| s.image.clone()).collect();
        let pred = infer(&seg, &images, &BandMeans::zeros()).unwrap();
        let (mut hit, mut all) = (0, 0);
        for (p, s) in pred.iter().zip(&data) {
            for (a, b) in p.as_u8().unwrap().iter().zip(s.labels.as_u8().unwrap()) {
                hit += (a == b) as usize;
                all += 1;
            }
        }
        assert!(hit as f64 / all as f64 >= 0.95, "accuracy {}", hit as f64 / all as f64);
    }

    #[test]
    fn fixed_batch_loss_strictly_decreases() {
        let cfg = SegTrainConfig {
            batch: 1,
            augment: false,
            ..quick(10)
        };
        let (_, log) = train_seg(&separable(1, 5), &cfg, &BandMeans::zeros(), None).unwrap();
        assert_eq!(log.len(), 10);
        for w in log.windows(2) {
            assert!(w[1].loss < w[0].loss, "{} -> {}", w[0].loss, w[1].loss);
        }
    }

    #[test]
    fn schedule_endpoints_are_logged() {
        let cfg = SegTrainConfig {
            base_lr: 1e-4,
            ..quick(5)
        };
        let (_, log) = train_seg(&separable(2, 1), &cfg, &BandMeans::zeros(), None).unwrap();
        assert_eq!(log[0].lr, 1e-4);
        assert!(log[4].lr < log[3].lr);
        assert!((log[4].lr - 1e-4 * 0.2f64.powf(0.9)).abs() < 1e-15);
    }

    #[test]
    fn identical_seeds_give_identical_checkpoints() {
        let dir = tempfile::tempdir().unwrap();
        let data = separable(4, 2);
        let (a, b) = (dir.path().join("a.ckpt"), dir.path().join("b.ckpt"));
        train_seg(&data, &quick(3), &BandMeans::zeros(), Some(&a)).unwrap();
        train_seg(&data, &quick(3), &BandMeans::zeros(), Some(&b)).unwrap();
        assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
        let (seg, means) = load_segmenter(&a).unwrap();
        assert_eq!(means, BandMeans::zeros());
        assert_eq!(seg.classes(), NUM_CLASSES);
    }

    #[test]
    fn rejects_bad_inputs() {
        let m = BandMeans::zeros();
        assert!(train_seg(&[], &quick(1), &m, None).is_err());
        let mut data = separable(1, 3);
        data[0].labels = Raster::from_u8(16, 16, 1, vec![9; 256]).unwrap();
        assert!(matches!(
            train_seg(&data, &quick(1), &m, None),
            Err(Error::UnknownCode { code: 9, .. })
        ));
    }

    #[test]
    fn inference_output_codes_and_partitioning() {
        let seg = Segmenter::new(NUM_CLASSES, 1);
        let tiles: Vec<Raster> = separable(3, 4).into_iter().map(|s| s.image).collect();
        let m = BandMeans::zeros();
        let all = infer(&seg, &tiles, &m).unwrap();
        let one_by_one: Vec<Raster> = tiles
            .iter()
            .flat_map(|t| infer(&seg, std::slice::from_ref(t), &m).unwrap())
            .collect();
        assert_eq!(all, one_by_one);
        assert!(all.iter().all(|r| r.as_u8().unwrap().iter().all(|&c| c < 8)));

        let dead = tiles[0].clone().with_validmask(Some(vec![false; 256])).unwrap();
        let out = infer(&seg, &[dead], &m).unwrap();
        assert!(out[0].as_u8().unwrap().iter().all(|&c| c == LABEL_NODATA));
    }
}
