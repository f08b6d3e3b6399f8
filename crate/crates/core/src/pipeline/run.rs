use std::fs;
use std::path::{Path, PathBuf};

use indexmap::IndexMap;
use log::info;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use super::config::{PipelineConfig, ShiftSpec, StyleModeName};
use crate::error::{Error, Result};
use crate::evaluation::{
    confusion, iou_from_confusion, random_point_validation, render_labelmap, to_class_indices, write_report,
    ReportExtras,
};
use crate::labels::{builtin_schemes, class_distribution, crosswalk, recode, LabelScheme, RecodeMap, CORINE, NALCMS};
use crate::raster::{
    band_stats, estimate_shift_offsets, read, rescale_unit, shift_values, tile_dataset, write, DType, Raster,
    Samples, TileRecord, LABEL_NODATA,
};
use crate::segmentation::{
    compute_band_means, infer, load_segmenter, train_seg, write_seg_log, BandMeans, SegSample,
};
use crate::style::{
    build_mixed_dataset, extract_domain_style, read_manifest, stylize_dataset, train_style, write_manifest,
    DomainStyle, ManifestRecord, Origin, StyleLogRow, StyleModels, StylizeMode,
};

pub const STAGES_FILE: &str = "stages.json";
pub const REPORT_FILE: &str = "report.json";
pub const MANIFEST_FILE: &str = "manifest.jsonl";
pub const BASELINE_MANIFEST_FILE: &str = "baseline.jsonl";
pub const BASELINE_CKPT: &str = "baseline.ckpt";
pub const ADAPTED_CKPT: &str = "adapted.ckpt";

const HISTOGRAM_BINS: usize = 4096;

/// One executed stage: what went in, what came out, keyed for resumption.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: String,
    pub key: String,
    pub seed: Option<u64>,
    pub params: Value,
    pub inputs: IndexMap<String, String>,
    pub outputs: IndexMap<String, String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunSummary {
    pub executed: Vec<String>,
    pub skipped: Vec<String>,
    pub report: Value,
    pub out_dir: PathBuf,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn write_json(value: &impl Serialize, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

fn mkdir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

struct Runner {
    out: PathBuf,
    records: Vec<StageRecord>,
    executed: Vec<String>,
    skipped: Vec<String>,
}

impl Runner {
    fn name(&self, p: &Path) -> String {
        match p.strip_prefix(&self.out) {
            Ok(r) => r.to_string_lossy().replace('\\', "/"),
            Err(_) => p.display().to_string(),
        }
    }

    fn hashes(&self, paths: &[PathBuf]) -> Result<IndexMap<String, String>> {
        paths.iter().map(|p| Ok((self.name(p), sha256_file(p)?))).collect()
    }

    /// Run `body` unless a record with the same key exists and every output
    /// it lists is still on disk with the recorded hash.
    fn stage(
        &mut self,
        name: &str,
        seed: Option<u64>,
        params: Value,
        inputs: &[PathBuf],
        body: impl FnOnce() -> Result<Vec<PathBuf>>,
    ) -> Result<Vec<PathBuf>> {
        let tag = |e: Error| Error::Stage {
            stage: name.to_string(),
            source: Box::new(e),
        };
        let inputs = self.hashes(inputs).map_err(tag)?;
        let key = hex::encode(Sha256::digest(
            json!({ "stage": name, "seed": seed, "params": params, "inputs": inputs })
                .to_string()
                .as_bytes(),
        ));
        if let Some(r) = self.records.iter().find(|r| r.stage == name && r.key == key) {
            let outputs: Vec<PathBuf> = r.outputs.keys().map(|k| self.out.join(k)).collect();
            let intact = outputs
                .iter()
                .zip(r.outputs.values())
                .all(|(p, h)| sha256_file(p).is_ok_and(|x| &x == h));
            if intact {
                info!("stage {name}: up to date");
                self.skipped.push(name.to_string());
                return Ok(outputs);
            }
        }
        info!("stage {name}: running");
        let outputs = body().map_err(tag)?;
        let record = StageRecord {
            stage: name.to_string(),
            key,
            seed,
            params,
            inputs,
            outputs: self.hashes(&outputs).map_err(tag)?,
        };
        self.records.retain(|r| r.stage != name);
        self.records.push(record);
        write_json(&self.records, &self.out.join(STAGES_FILE))?;
        self.executed.push(name.to_string());
        Ok(outputs)
    }
}

fn apply_shift(r: &Raster, spec: &ShiftSpec) -> Result<(Raster, Vec<u16>)> {
    r.expect_dtype(DType::U16)?;
    let offsets = match spec {
        ShiftSpec::None => vec![0; r.bands()],
        ShiftSpec::Offsets(o) => o.clone(),
        ShiftSpec::Percentile(q) => estimate_shift_offsets(&band_stats(r, HISTOGRAM_BINS)?, *q)?,
    };
    Ok((shift_values(r, &offsets)?, offsets))
}

fn to_general(scheme_id: &str) -> Result<(LabelScheme, RecodeMap)> {
    let b = builtin_schemes();
    Ok(match scheme_id {
        NALCMS => (b.nalcms, b.nalcms_to_general),
        CORINE => (b.corine, b.corine_to_general),
        _ => {
            let map = RecodeMap::identity(&b.general);
            (b.general, map)
        }
    })
}

/// Tile listing written by the tile stage.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct TileIndex {
    width: usize,
    height: usize,
    records: Vec<TileRecord>,
}

fn numbered(dir: &Path, n: usize, suffix: &str) -> Vec<PathBuf> {
    (0..n).map(|i| dir.join(format!("{i:05}{suffix}"))).collect()
}

fn read_all(paths: &[PathBuf]) -> Result<Vec<Raster>> {
    paths.iter().map(|p| read(p)).collect()
}

fn read_unit(paths: &[PathBuf]) -> Result<Vec<Raster>> {
    paths.iter().map(|p| rescale_unit(&read(p)?)).collect()
}

/// Paste tiles into a nodata scene at their recorded offsets.
fn mosaic(index: &TileIndex, tiles: &[Raster]) -> Result<Raster> {
    let mut out = vec![LABEL_NODATA; index.width * index.height];
    for (rec, t) in index.records.iter().zip(tiles) {
        let codes = t.as_u8().ok_or_else(|| Error::DType {
            expected: "U8".into(),
            found: t.dtype().to_string(),
        })?;
        for y in 0..rec.size {
            for x in 0..rec.size {
                let p = y * rec.size + x;
                if t.label_valid(p) {
                    out[(rec.y + y) * index.width + rec.x + x] = codes[p];
                }
            }
        }
    }
    Raster::from_u8(index.width, index.height, 1, out)
}

fn indices_to_codes(r: &Raster, scheme: &LabelScheme) -> Result<Raster> {
    let codes = r
        .as_u8()
        .unwrap()
        .iter()
        .map(|&i| {
            if i == LABEL_NODATA {
                LABEL_NODATA
            } else {
                scheme.entries()[i as usize].code
            }
        })
        .collect();
    Raster::new(r.width(), r.height(), 1, Samples::U8(codes), None, r.geotransform())
}

fn load_samples(out: &Path, manifest: &Path, general: &LabelScheme) -> Result<Vec<SegSample>> {
    read_manifest(manifest)?
        .iter()
        .map(|r| {
            Ok(SegSample {
                image: rescale_unit(&read(&out.join(&r.image_path))?)?,
                labels: to_class_indices(&read(&out.join(&r.label_path))?, general)?,
            })
        })
        .collect()
}

fn write_style_log(rows: &[StyleLogRow], path: &Path) -> Result<()> {
    let mut s = String::from(StyleLogRow::CSV_HEADER);
    s.push('\n');
    for r in rows {
        s.push_str(&r.csv());
        s.push('\n');
    }
    fs::write(path, s).map_err(|e| Error::io(path, e))
}

/// Execute every stage in order, skipping those whose inputs, parameters and
/// outputs are unchanged since the last run in the same output directory.
///
/// Stages: shift → tile → recode → train-style (gan mode) → stylize → mix →
/// band-means → train-seg-baseline → train-seg-adapted → infer → eval.
pub fn run(cfg: &PipelineConfig) -> Result<RunSummary> {
    cfg.validate()?;
    let out = cfg.paths.out_dir.clone();
    mkdir(&out)?;
    let records: Vec<StageRecord> = match out.join(STAGES_FILE) {
        p if p.is_file() => read_json(&p).unwrap_or_default(),
        _ => Vec::new(),
    };
    let mut rn = Runner {
        out: out.clone(),
        records,
        executed: Vec::new(),
        skipped: Vec::new(),
    };
    let p = &cfg.paths;
    let general = builtin_schemes().general;

    // shift
    let shift_dir = out.join("shift");
    let shifted = rn.stage(
        "shift",
        None,
        json!({ "source": cfg.preprocessing.source_shift, "target": cfg.preprocessing.target_shift }),
        &[p.source_image.clone(), p.target_image.clone()],
        || {
            mkdir(&shift_dir)?;
            let (s, so) = apply_shift(&read(&p.source_image)?, &cfg.preprocessing.source_shift)?;
            let (t, to) = apply_shift(&read(&p.target_image)?, &cfg.preprocessing.target_shift)?;
            let files = [shift_dir.join("source.mbt"), shift_dir.join("target.mbt"), shift_dir.join("offsets.json")];
            write(&s, &files[0])?;
            write(&t, &files[1])?;
            write_json(&json!({ "source": so, "target": to }), &files[2])?;
            Ok(files.to_vec())
        },
    )?;

    // tile
    let tile_dir = out.join("tiles");
    let tile_out = rn.stage(
        "tile",
        None,
        serde_json::to_value(cfg.preprocessing.tile)?,
        &[shifted[0].clone(), shifted[1].clone(), p.source_labels.clone(), p.target_labels.clone()],
        || {
            let mut files = Vec::new();
            for (side, image, labels) in [
                ("source", &shifted[0], &p.source_labels),
                ("target", &shifted[1], &p.target_labels),
            ] {
                let dir = tile_dir.join(side);
                mkdir(&dir)?;
                let image = read(image)?;
                let tiles = tile_dataset(&image, &read(labels)?, &cfg.preprocessing.tile)?;
                if tiles.is_empty() {
                    return Err(Error::Empty(format!("no {side} tile passes the validity threshold")));
                }
                let index = TileIndex {
                    width: image.width(),
                    height: image.height(),
                    records: tiles.iter().map(|t| t.record).collect(),
                };
                let imgs = numbered(&dir, tiles.len(), ".img.mbt");
                let labs = numbered(&dir, tiles.len(), ".lab.mbt");
                for ((t, i), l) in tiles.iter().zip(&imgs).zip(&labs) {
                    write(&t.image, i)?;
                    write(&t.labels, l)?;
                }
                let idx = tile_dir.join(format!("{side}.json"));
                write_json(&index, &idx)?;
                files.push(idx);
                files.extend(imgs);
                files.extend(labs);
            }
            Ok(files)
        },
    )?;
    let src_index: TileIndex = read_json(&tile_out[0])?;
    let tgt_index: TileIndex = read_json(&tile_dir.join("target.json"))?;
    let (ns, nt) = (src_index.records.len(), tgt_index.records.len());
    let src_imgs = numbered(&tile_dir.join("source"), ns, ".img.mbt");
    let src_labs = numbered(&tile_dir.join("source"), ns, ".lab.mbt");
    let tgt_imgs = numbered(&tile_dir.join("target"), nt, ".img.mbt");
    let tgt_labs = numbered(&tile_dir.join("target"), nt, ".lab.mbt");

    // recode
    let recode_dir = out.join("recode");
    let src_general = numbered(&recode_dir.join("source"), ns, ".mbt");
    let tgt_general = numbered(&recode_dir.join("target"), nt, ".mbt");
    let recode_inputs: Vec<PathBuf> = src_labs.iter().chain(&tgt_labs).cloned().collect();
    rn.stage(
        "recode",
        None,
        json!({ "source": cfg.schemes.source, "target": cfg.schemes.target }),
        &recode_inputs,
        || {
            let mut files = Vec::new();
            for (side, id, from, to) in [
                ("source", &cfg.schemes.source, &src_labs, &src_general),
                ("target", &cfg.schemes.target, &tgt_labs, &tgt_general),
            ] {
                mkdir(&recode_dir.join(side))?;
                let (_, map) = to_general(id)?;
                for (a, b) in from.iter().zip(to) {
                    write(&recode(&read(a)?, &map)?, b)?;
                }
                let m = recode_dir.join(format!("{side}_scheme.json"));
                general.write_manifest(Some(&map), &[], &m)?;
                files.push(m);
                files.extend(to.iter().cloned());
            }
            Ok(files)
        },
    )?;

    // train-style
    let style_dir = out.join("style");
    let style_inputs: Vec<PathBuf> = src_imgs.iter().chain(&tgt_imgs).cloned().collect();
    let style_files = if cfg.style.mode == StyleModeName::Gan {
        rn.stage(
            "train-style",
            Some(cfg.style.train.seed),
            serde_json::to_value(&cfg.style.train)?,
            &style_inputs,
            || {
                mkdir(&style_dir)?;
                let (_, log) =
                    train_style(&read_unit(&src_imgs)?, &read_unit(&tgt_imgs)?, &cfg.style.train, Some(&style_dir))?;
                let log_path = style_dir.join("log.csv");
                write_style_log(&log, &log_path)?;
                let mut files: Vec<PathBuf> = ["g_st.ckpt", "d_t.ckpt", "g_ts.ckpt", "d_s.ckpt"]
                    .iter()
                    .map(|f| style_dir.join(f))
                    .collect();
                files.push(log_path);
                Ok(files)
            },
        )?
    } else {
        Vec::new()
    };

    // stylize
    let sty_dir = out.join("stylized");
    let stylized = numbered(&sty_dir, ns, ".mbt");
    let stylize_inputs: Vec<PathBuf> = style_inputs.iter().chain(&style_files).cloned().collect();
    rn.stage(
        "stylize",
        None,
        json!({ "mode": cfg.style.mode }),
        &stylize_inputs,
        || {
            mkdir(&sty_dir)?;
            let source = read_unit(&src_imgs)?;
            let tiles = match cfg.style.mode {
                StyleModeName::Stats => {
                    let s = extract_domain_style(&source)?;
                    let t = extract_domain_style(&read_unit(&tgt_imgs)?)?;
                    write_json(&json!({ "source": s, "target": t }), &sty_dir.join("styles.json"))?;
                    stylize_dataset(&source, &StylizeMode::Stats { source: &s, target: &t })?
                }
                StyleModeName::Gan => {
                    let m = StyleModels::load(&style_dir)?;
                    let target: &DomainStyle = &m.target_style;
                    stylize_dataset(
                        &source,
                        &StylizeMode::Gan {
                            generator: &m.g_st,
                            target,
                        },
                    )?
                }
            };
            for (t, path) in tiles.iter().zip(&stylized) {
                write(t, path)?;
            }
            Ok(stylized.clone())
        },
    )?;

    // mix
    let rel = |v: &[PathBuf]| -> Vec<PathBuf> { v.iter().map(|x| PathBuf::from(rn.name(x))).collect() };
    let originals: Vec<(PathBuf, PathBuf)> = rel(&src_imgs).into_iter().zip(rel(&src_general)).collect();
    let stylized_rel = rel(&stylized);
    let mix_inputs: Vec<PathBuf> = src_general.iter().chain(&stylized).cloned().collect();
    let manifests = rn.stage("mix", None, json!({}), &mix_inputs, || {
        let mixed = build_mixed_dataset(&originals, &stylized_rel)?;
        let baseline: Vec<ManifestRecord> = mixed.iter().filter(|r| r.origin == Origin::Original).cloned().collect();
        let files = [out.join(BASELINE_MANIFEST_FILE), out.join(MANIFEST_FILE)];
        write_manifest(&baseline, &files[0])?;
        write_manifest(&mixed, &files[1])?;
        Ok(files.to_vec())
    })?;

    // band-means
    let mean_inputs: Vec<PathBuf> = src_imgs.iter().chain(&stylized).chain(&tgt_imgs).cloned().collect();
    let means_file = rn.stage("band-means", None, json!({}), &mean_inputs, || {
        let sets = [read_unit(&src_imgs)?, read_unit(&stylized)?, read_unit(&tgt_imgs)?];
        let refs: Vec<&[Raster]> = sets.iter().map(Vec::as_slice).collect();
        let path = out.join("means.json");
        write_json(&compute_band_means(&refs)?, &path)?;
        Ok(vec![path])
    })?;
    let means: BandMeans = read_json(&means_file[0])?;

    // train-seg, identical settings for both runs
    let mut ckpts = Vec::new();
    for (stage, manifest, ckpt, log) in [
        ("train-seg-baseline", &manifests[0], BASELINE_CKPT, "baseline_log.csv"),
        ("train-seg-adapted", &manifests[1], ADAPTED_CKPT, "adapted_log.csv"),
    ] {
        let mut inputs = vec![manifest.clone(), means_file[0].clone()];
        for r in read_manifest(manifest)? {
            inputs.push(out.join(&r.image_path));
            inputs.push(out.join(&r.label_path));
        }
        inputs.dedup();
        let files = rn.stage(
            stage,
            Some(cfg.segmentation.seed),
            serde_json::to_value(&cfg.segmentation)?,
            &inputs,
            || {
                let samples = load_samples(&out, manifest, &general)?;
                info!("{stage}: {} samples from {}", samples.len(), manifest.display());
                let path = out.join(ckpt);
                let (_, rows) = train_seg(&samples, &cfg.segmentation, &means, Some(&path))?;
                let log_path = out.join(log);
                write_seg_log(&rows, &log_path)?;
                Ok(vec![path, log_path])
            },
        )?;
        ckpts.push(files[0].clone());
    }

    // infer
    let pred_dir = out.join("pred");
    let mut infer_inputs = ckpts.clone();
    infer_inputs.extend(tgt_imgs.iter().cloned());
    let preds = rn.stage("infer", None, json!({}), &infer_inputs, || {
        mkdir(&pred_dir)?;
        let tiles = read_unit(&tgt_imgs)?;
        let mut files = Vec::new();
        for (ckpt, name) in ckpts.iter().zip(["baseline.mbt", "adapted.mbt"]) {
            let (seg, means) = load_segmenter(ckpt)?;
            let labels = infer(&seg, &tiles, &means)?
                .iter()
                .map(|t| indices_to_codes(t, &general))
                .collect::<Result<Vec<_>>>()?;
            let path = pred_dir.join(name);
            write(&mosaic(&tgt_index, &labels)?, &path)?;
            files.push(path);
        }
        Ok(files)
    })?;

    // eval
    let mut eval_inputs = preds.clone();
    eval_inputs.extend(src_general.iter().cloned());
    eval_inputs.extend(tgt_general.iter().cloned());
    rn.stage(
        "eval",
        Some(cfg.evaluation.seed),
        serde_json::to_value(&cfg.evaluation)?,
        &eval_inputs,
        || {
            let reference = mosaic(&tgt_index, &read_all(&tgt_general)?)?;
            let source = mosaic(&src_index, &read_all(&src_general)?)?;
            let baseline = read(&preds[0])?;
            let adapted = read(&preds[1])?;
            let k = general.len();
            let ref_idx = to_class_indices(&reference, &general)?;
            let score = |pred: &Raster| -> Result<_> {
                Ok(iou_from_confusion(&confusion(&ref_idx, &to_class_indices(pred, &general)?, k)?))
            };
            let (b_iou, a_iou) = (score(&baseline)?, score(&adapted)?);
            let mut distributions = IndexMap::new();
            distributions.insert("source".to_string(), class_distribution(&source, &general)?);
            distributions.insert("target".to_string(), class_distribution(&reference, &general)?);
            distributions.insert("adapted_prediction".to_string(), class_distribution(&adapted, &general)?);
            let cw = crosswalk(&reference, &adapted)?;
            let n = cfg.evaluation.points;
            let pb = random_point_validation(&reference, &baseline, n, cfg.evaluation.seed)?;
            let pa = random_point_validation(&reference, &adapted, n, cfg.evaluation.seed)?;
            let names: Vec<String> = general.entries().iter().map(|e| e.name.clone()).collect();
            let report = out.join(REPORT_FILE);
            write_report(
                &names,
                &b_iou,
                &a_iou,
                &ReportExtras {
                    distributions,
                    crosswalk: Some(&cw),
                    points: Some((&pb, &pa)),
                },
                &report,
            )?;
            let render = out.join("render");
            mkdir(&render)?;
            let mut files = vec![report];
            for (name, r) in [("reference", &reference), ("baseline", &baseline), ("adapted", &adapted)] {
                let path = render.join(format!("{name}.ppm"));
                render_labelmap(r, &general, &path)?;
                files.push(path);
            }
            Ok(files)
        },
    )?;

    let report = read_json(&out.join(REPORT_FILE))?;
    Ok(RunSummary {
        executed: rn.executed,
        skipped: rn.skipped,
        report,
        out_dir: out,
    })
}
