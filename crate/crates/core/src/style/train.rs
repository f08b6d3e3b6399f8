use std::path::Path;

use log::{debug, info};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::nets::style_batch;
use super::{extract_domain_style, Discriminator, DomainStyle, Generator, BANDS, DISCRIMINATOR_KIND, GENERATOR_KIND};
use crate::error::{Error, Result};
use crate::numerics::{AdamConfig, AdamState, ParamSet, Tape, Target, Tensor};
use crate::raster::{DType, Raster};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StyleTrainConfig {
    pub steps: u64,
    pub batch: usize,
    pub lr_g: f64,
    pub lr_d: f64,
    /// First-moment decay for both optimizers.
    pub beta1: f64,
    pub seed: u64,
    /// Write checkpoints every this many steps; 0 writes only the final ones.
    pub checkpoint_interval: u64,
}

impl Default for StyleTrainConfig {
    fn default() -> Self {
        StyleTrainConfig {
            steps: 2000,
            batch: 4,
            lr_g: 2e-4,
            lr_d: 2e-4,
            beta1: 0.5,
            seed: 17,
            checkpoint_interval: 0,
        }
    }
}

impl StyleTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 || self.batch == 0 {
            return Err(Error::Config("style training needs steps ≥ 1 and batch ≥ 1".into()));
        }
        for (name, v) in [("lr_g", self.lr_g), ("lr_d", self.lr_d)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(0.0..1.0).contains(&self.beta1) {
            return Err(Error::Config(format!("beta1 {} outside [0, 1)", self.beta1)));
        }
        Ok(())
    }
}

/// Losses and discriminator accuracy of both directions at one step.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StyleLogRow {
    pub step: u64,
    pub loss_d_st: f64,
    pub loss_g_st: f64,
    pub acc_d_st: f64,
    pub loss_d_ts: f64,
    pub loss_g_ts: f64,
    pub acc_d_ts: f64,
}

impl StyleLogRow {
    pub const CSV_HEADER: &'static str = "step,loss_d_st,loss_g_st,acc_d_st,loss_d_ts,loss_g_ts,acc_d_ts";

    pub fn csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.step, self.loss_d_st, self.loss_g_st, self.acc_d_st, self.loss_d_ts, self.loss_g_ts, self.acc_d_ts
        )
    }
}

/// Both generator/discriminator pairs and the two domain styles.
#[derive(Clone, Debug, PartialEq)]
pub struct StyleModels {
    /// Source → target generator, judged by `d_t`.
    pub g_st: Generator,
    pub d_t: Discriminator,
    /// Target → source generator, judged by `d_s`.
    pub g_ts: Generator,
    pub d_s: Discriminator,
    pub source_style: DomainStyle,
    pub target_style: DomainStyle,
}

const FILES: [&str; 4] = ["g_st.ckpt", "d_t.ckpt", "g_ts.ckpt", "d_s.ckpt"];

impl StyleModels {
    pub fn new(seed: u64, source_style: DomainStyle, target_style: DomainStyle) -> Self {
        StyleModels {
            g_st: Generator::new(seed),
            d_t: Discriminator::new(seed.wrapping_add(1)),
            g_ts: Generator::new(seed.wrapping_add(2)),
            d_s: Discriminator::new(seed.wrapping_add(3)),
            source_style,
            target_style,
        }
    }

    fn meta(&self) -> serde_json::Value {
        json!({ "source_style": self.source_style, "target_style": self.target_style })
    }

    /// Four checkpoint files in `dir`, each carrying both styles.
    pub fn save(&self, dir: &Path, prefix: &str) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let sets: [(&ParamSet, &str); 4] = [
            (&self.g_st.params, GENERATOR_KIND),
            (&self.d_t.params, DISCRIMINATOR_KIND),
            (&self.g_ts.params, GENERATOR_KIND),
            (&self.d_s.params, DISCRIMINATOR_KIND),
        ];
        for ((set, kind), file) in sets.into_iter().zip(FILES) {
            set.save(&dir.join(format!("{prefix}{file}")), kind, self.meta())?;
        }
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let g = Generator::new(0).params;
        let d = Discriminator::new(0).params;
        let g_st = ParamSet::load_matching(&dir.join(FILES[0]), GENERATOR_KIND, &g)?;
        let d_t = ParamSet::load_matching(&dir.join(FILES[1]), DISCRIMINATOR_KIND, &d)?;
        let g_ts = ParamSet::load_matching(&dir.join(FILES[2]), GENERATOR_KIND, &g)?;
        let d_s = ParamSet::load_matching(&dir.join(FILES[3]), DISCRIMINATOR_KIND, &d)?;
        let (_, meta, _) = ParamSet::load(&dir.join(FILES[0]))?;
        Ok(StyleModels {
            g_st: Generator::from_params(g_st)?,
            d_t: Discriminator::from_params(d_t)?,
            g_ts: Generator::from_params(g_ts)?,
            d_s: Discriminator::from_params(d_s)?,
            source_style: serde_json::from_value(meta["source_style"].clone())?,
            target_style: serde_json::from_value(meta["target_style"].clone())?,
        })
    }
}

struct Pool {
    shape: [usize; 3],
    tiles: Vec<Vec<f32>>,
}

impl Pool {
    fn new(tiles: &[Raster], what: &str) -> Result<Pool> {
        let first = tiles
            .first()
            .ok_or_else(|| Error::Empty(format!("{what} tile set is empty")))?;
        let shape = [first.bands(), first.height(), first.width()];
        if shape[0] != BANDS {
            return Err(Error::Dimension(format!("{what} tiles have {} bands, expected {BANDS}", shape[0])));
        }
        let mut out = Vec::with_capacity(tiles.len());
        for t in tiles {
            if [t.bands(), t.height(), t.width()] != shape {
                return Err(Error::Dimension(format!("{what} tiles differ in size")));
            }
            t.expect_dtype(DType::F32)?;
            out.push(t.as_f32().unwrap().to_vec());
        }
        Ok(Pool { shape, tiles: out })
    }

    fn batch(&self, rng: &mut ChaCha8Rng, n: usize) -> Result<Tensor> {
        let mut data = Vec::with_capacity(n * self.tiles[0].len());
        for _ in 0..n {
            data.extend_from_slice(&self.tiles[rng.random_range(0..self.tiles.len())]);
        }
        Tensor::new(&[n, self.shape[0], self.shape[1], self.shape[2]], data)
    }
}

struct Pair<'a> {
    g: &'a mut Generator,
    g_opt: &'a mut AdamState,
    d: &'a mut Discriminator,
    d_opt: &'a mut AdamState,
}

/// One discriminator update followed by one generator update against the
/// updated discriminator. Returns `(loss_d, loss_g, accuracy_d)`.
fn adversarial_step(
    pair: Pair<'_>,
    x_src: &Tensor,
    x_real: &Tensor,
    style: &Tensor,
    cfg: &StyleTrainConfig,
) -> Result<(f64, f64, f64)> {
    let mut gt = Tape::new();
    let gp = pair.g.params.bind(&mut gt, true);
    let (fake, _, _) = pair.g.forward(&mut gt, &gp, x_src, style)?;

    let mut dt = Tape::new();
    let dp = pair.d.params.bind(&mut dt, true);
    let xr = dt.input(x_real.clone());
    let xf = dt.input(gt.value(fake).clone());
    let pr = pair.d.forward(&mut dt, &dp, xr)?;
    let pf = pair.d.forward(&mut dt, &dp, xf)?;
    let correct = dt.value(pr).data().iter().filter(|&&p| p > 0.5).count()
        + dt.value(pf).data().iter().filter(|&&p| p < 0.5).count();
    let acc = correct as f64 / (dt.value(pr).len() + dt.value(pf).len()) as f64;
    let lr_ = dt.log_loss(pr, Target::Real)?;
    let lf = dt.log_loss(pf, Target::Fake)?;
    let ld = dt.add(lr_, lf)?;
    let loss_d = dt.value(ld).item() as f64;
    if !loss_d.is_finite() {
        return Err(Error::NonFinite("discriminator loss".into()));
    }
    let grads = dt.backward(ld)?;
    pair.d_opt.step(&mut pair.d.params, &grads.collect(&dp), cfg.lr_d)?;

    let dconst = pair.d.params.bind(&mut gt, false);
    let pg = pair.d.forward(&mut gt, &dconst, fake)?;
    let lg = gt.log_loss(pg, Target::Real)?;
    let loss_g = gt.value(lg).item() as f64;
    if !loss_g.is_finite() {
        return Err(Error::NonFinite("generator loss".into()));
    }
    let grads = gt.backward(lg)?;
    pair.g_opt.step(&mut pair.g.params, &grads.collect(&gp), cfg.lr_g)?;
    Ok((loss_d, loss_g, acc))
}

/// Train both directions with alternating D/G updates.
///
/// Every step draws one source and one target batch, updates the
/// source→target pair (real = target tiles, fake = `g_st(source)`), then the
/// target→source pair symmetrically. With `out_dir`, checkpoints go there; a
/// non-finite loss writes `diagnostic_*.ckpt` files before failing.
pub fn train_style(
    source: &[Raster],
    target: &[Raster],
    cfg: &StyleTrainConfig,
    out_dir: Option<&Path>,
) -> Result<(StyleModels, Vec<StyleLogRow>)> {
    cfg.validate()?;
    let src = Pool::new(source, "source")?;
    let tgt = Pool::new(target, "target")?;
    let source_style = extract_domain_style(source)?;
    let target_style = extract_domain_style(target)?;
    let mut m = StyleModels::new(cfg.seed, source_style, target_style);
    let adam = AdamConfig {
        beta1: cfg.beta1,
        ..AdamConfig::default()
    };
    let mut opts = [
        AdamState::new(&m.g_st.params, adam),
        AdamState::new(&m.d_t.params, adam),
        AdamState::new(&m.g_ts.params, adam),
        AdamState::new(&m.d_s.params, adam),
    ];
    let to_target = style_batch(&m.target_style, cfg.batch)?;
    let to_source = style_batch(&m.source_style, cfg.batch)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5354_594c_4521);
    let mut log = Vec::with_capacity(cfg.steps as usize);

    for step in 0..cfg.steps {
        let xs = src.batch(&mut rng, cfg.batch)?;
        let xt = tgt.batch(&mut rng, cfg.batch)?;
        let [o_gst, o_dt, o_gts, o_ds] = &mut opts;
        let st = adversarial_step(
            Pair {
                g: &mut m.g_st,
                g_opt: o_gst,
                d: &mut m.d_t,
                d_opt: o_dt,
            },
            &xs,
            &xt,
            &to_target,
            cfg,
        );
        let ts = st.and_then(|st| {
            adversarial_step(
                Pair {
                    g: &mut m.g_ts,
                    g_opt: o_gts,
                    d: &mut m.d_s,
                    d_opt: o_ds,
                },
                &xt,
                &xs,
                &to_source,
                cfg,
            )
            .map(|ts| (st, ts))
        });
        let ((ld1, lg1, a1), (ld2, lg2, a2)) = match ts {
            Ok(v) => v,
            Err(e) => {
                if let Some(dir) = out_dir {
                    m.save(dir, "diagnostic_")?;
                }
                return Err(Error::Stage {
                    stage: format!("train-style step {step}"),
                    source: Box::new(e),
                });
            }
        };
        let row = StyleLogRow {
            step,
            loss_d_st: ld1,
            loss_g_st: lg1,
            acc_d_st: a1,
            loss_d_ts: ld2,
            loss_g_ts: lg2,
            acc_d_ts: a2,
        };
        debug!("style {}", row.csv());
        if step % 100 == 0 {
            info!("style step {step}: loss_d {ld1:.4}/{ld2:.4} loss_g {lg1:.4}/{lg2:.4}");
        }
        log.push(row);
        if let Some(dir) = out_dir {
            if cfg.checkpoint_interval > 0 && (step + 1) % cfg.checkpoint_interval == 0 {
                m.save(dir, "")?;
            }
        }
    }
    if let Some(dir) = out_dir {
        m.save(dir, "")?;
    }
    Ok((m, log))
}
