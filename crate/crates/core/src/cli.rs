//! Command-line front end. Every subcommand wraps one library operation;
//! `run` drives the whole pipeline from a JSON config.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use serde_json::json;

use crate::error::{Error, Result};
use crate::evaluation::{
    confusion, iou_from_confusion, random_point_validation, render_labelmap, to_class_indices, write_report,
    ReportExtras,
};
use crate::labels::{builtin_schemes, recode, LabelScheme, RecodeMap, UnknownPolicy, CORINE, GENERAL, NALCMS};
use crate::pipeline::{run, write_synth, PipelineConfig, StyleModeName, SynthSpec};
use crate::raster::{
    band_stats, composite_bands, estimate_shift_offsets, read, rescale_unit, set_nodata_mask, shift_values,
    tile_dataset, write, Raster, TileSpec, LABEL_NODATA,
};
use crate::segmentation::{
    compute_band_means, infer, load_segmenter, train_seg, write_seg_log, SegSample, SegTrainConfig,
};
use crate::style::{
    build_mixed_dataset, extract_domain_style, read_manifest, stylize_dataset, train_style, write_manifest,
    StyleModels, StyleTrainConfig, StylizeMode,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "xsensor", version, about = "Cross-sensor domain adaptation for land-cover segmentation")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// JSON configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for every random choice.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output file or directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum SchemeArg {
    Nalcms,
    Corine,
    General,
}

impl SchemeArg {
    fn scheme(self) -> LabelScheme {
        let b = builtin_schemes();
        match self {
            SchemeArg::Nalcms => b.nalcms,
            SchemeArg::Corine => b.corine,
            SchemeArg::General => b.general,
        }
    }

    fn id(self) -> &'static str {
        match self {
            SchemeArg::Nalcms => NALCMS,
            SchemeArg::Corine => CORINE,
            SchemeArg::General => GENERAL,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum ModeArg {
    Stats,
    Gan,
}

impl From<ModeArg> for StyleModeName {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Stats => StyleModeName::Stats,
            ModeArg::Gan => StyleModeName::Gan,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Stack single-band rasters into one multiband raster.
    Ingest {
        #[arg(long, num_args = 1.., required = true)]
        bands: Vec<PathBuf>,
        /// U8 raster whose non-zero pixels are cloud or other nodata.
        #[arg(long)]
        cloud_mask: Option<PathBuf>,
    },
    /// Per-band statistics as JSON.
    Stats {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 1024)]
        bins: usize,
    },
    /// Subtract per-band offsets, given or estimated from a lower percentile.
    Shift {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_delimiter = ',', conflicts_with = "percentile")]
        offsets: Option<Vec<u16>>,
        #[arg(long)]
        percentile: Option<f64>,
    },
    /// Cut an image/label pair into tiles.
    Tile {
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        #[arg(long, default_value_t = 512)]
        size: usize,
        #[arg(long)]
        stride: Option<usize>,
        #[arg(long, default_value_t = 0.5)]
        min_valid: f64,
    },
    /// Translate a label raster into another scheme.
    Recode {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum)]
        from: SchemeArg,
        #[arg(long, value_enum, default_value = "general")]
        to: SchemeArg,
        /// Map codes missing from the table to nodata instead of failing.
        #[arg(long)]
        unknown_to_nodata: bool,
        /// Also write the target scheme manifest here.
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
    /// Train both generator/discriminator pairs on two tile directories.
    TrainStyle {
        #[arg(long)]
        source: PathBuf,
        #[arg(long)]
        target: PathBuf,
        #[arg(long)]
        steps: Option<u64>,
    },
    /// Stylize source tiles towards the target domain.
    Stylize {
        #[arg(long)]
        tiles: PathBuf,
        #[arg(long, value_enum, default_value = "gan")]
        mode: ModeArg,
        /// Target tile directory (stats mode).
        #[arg(long)]
        target: Option<PathBuf>,
        /// Directory written by `train-style` (gan mode).
        #[arg(long)]
        models: Option<PathBuf>,
    },
    /// Write the mixed original + stylized manifest.
    Mix {
        /// Tile directory with `*.img.mbt` images and `*.lab.mbt` labels.
        #[arg(long)]
        originals: PathBuf,
        #[arg(long)]
        stylized: PathBuf,
    },
    /// Train the segmenter on a manifest whose labels use General codes.
    TrainSeg {
        #[arg(long)]
        manifest: PathBuf,
        /// Extra tile directory included in the band means.
        #[arg(long)]
        validation: Option<PathBuf>,
        #[arg(long)]
        steps: Option<u64>,
    },
    /// Label every tile of a directory with a trained segmenter.
    Infer {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        tiles: PathBuf,
    },
    /// Score a prediction against a reference.
    Eval {
        #[arg(long = "ref")]
        reference: PathBuf,
        #[arg(long)]
        pred: PathBuf,
        /// Codes are class indices `0..classes`.
        #[arg(long, conflicts_with = "scheme")]
        classes: Option<usize>,
        /// Codes belong to this scheme.
        #[arg(long, value_enum)]
        scheme: Option<SchemeArg>,
        #[arg(long)]
        points: Option<usize>,
    },
    /// Generate the synthetic two-domain benchmark and a matching config.
    Synth {
        #[arg(long, value_enum, default_value = "gan")]
        style: ModeArg,
        #[arg(long)]
        tiles: Option<usize>,
    },
    /// Run the whole pipeline from `--config`.
    Run,
    /// Render a label raster as a PPM image.
    Render {
        #[arg(long)]
        labels: PathBuf,
        #[arg(long, value_enum, default_value = "general")]
        scheme: SchemeArg,
    },
}

fn need_out(c: &Common) -> Result<&Path> {
    c.out
        .as_deref()
        .ok_or_else(|| Error::InvalidArgument("--out is required".into()))
}

fn mkdir(p: &Path) -> Result<()> {
    std::fs::create_dir_all(p).map_err(|e| Error::io(p, e))
}

fn write_text(path: &Path, text: String) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// `*.img.mbt` files of a tile directory, sorted, with their `*.lab.mbt` partners.
fn list_tiles(dir: &Path) -> Result<Vec<(PathBuf, PathBuf)>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut out = Vec::new();
    for e in entries {
        let p = e.map_err(|e| Error::io(dir, e))?.path();
        let name = p.file_name().unwrap_or_default().to_string_lossy().into_owned();
        if let Some(stem) = name.strip_suffix(".img.mbt") {
            out.push((p.clone(), dir.join(format!("{stem}.lab.mbt"))));
        }
    }
    out.sort();
    if out.is_empty() {
        return Err(Error::InvalidArgument(format!("{} holds no *.img.mbt tiles", dir.display())));
    }
    Ok(out)
}

fn unit_tiles(dir: &Path) -> Result<Vec<Raster>> {
    list_tiles(dir)?.iter().map(|(i, _)| rescale_unit(&read(i)?)).collect()
}

fn load_json<T: serde::de::DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))
        }
        None => Ok(T::default()),
    }
}

fn indices_to_general(r: &Raster, general: &LabelScheme) -> Result<Raster> {
    let codes = r
        .as_u8()
        .unwrap()
        .iter()
        .map(|&i| {
            if i == LABEL_NODATA {
                i
            } else {
                general.entries()[i as usize].code
            }
        })
        .collect();
    Raster::from_u8(r.width(), r.height(), 1, codes)
}

pub fn execute(cli: Cli) -> Result<()> {
    let c = &cli.common;
    match cli.command {
        Command::Ingest { bands, cloud_mask } => {
            let rasters = bands.iter().map(|p| read(p)).collect::<Result<Vec<_>>>()?;
            let mut out = composite_bands(&rasters)?;
            if let Some(m) = cloud_mask {
                let mask = read(&m)?;
                let flags: Vec<bool> = (0..mask.pixels()).map(|p| mask.get(0, p) != 0.0).collect();
                out = set_nodata_mask(&out, &flags)?;
            }
            write(&out, need_out(c)?)?;
        }
        Command::Stats { input, bins } => {
            let s = serde_json::to_string_pretty(&band_stats(&read(&input)?, bins)?)?;
            match &c.out {
                Some(p) => write_text(p, s + "\n")?,
                None => println!("{s}"),
            }
        }
        Command::Shift {
            input,
            offsets,
            percentile,
        } => {
            let r = read(&input)?;
            let offsets = match (offsets, percentile) {
                (Some(o), _) => o,
                (None, q) => estimate_shift_offsets(
                    &band_stats(&r, 4096)?,
                    q.unwrap_or(crate::raster::DEFAULT_SHIFT_PERCENTILE),
                )?,
            };
            info!("shift offsets {offsets:?}");
            write(&shift_values(&r, &offsets)?, need_out(c)?)?;
        }
        Command::Tile {
            image,
            labels,
            size,
            stride,
            min_valid,
        } => {
            let spec = TileSpec {
                tile_size: size,
                stride: stride.unwrap_or(size),
                min_valid_fraction: min_valid,
            };
            let tiles = tile_dataset(&read(&image)?, &read(&labels)?, &spec)?;
            let dir = need_out(c)?;
            mkdir(dir)?;
            for (i, t) in tiles.iter().enumerate() {
                write(&t.image, &dir.join(format!("{i:05}.img.mbt")))?;
                write(&t.labels, &dir.join(format!("{i:05}.lab.mbt")))?;
            }
            let records: Vec<_> = tiles.iter().map(|t| t.record).collect();
            write_text(&dir.join("tiles.json"), serde_json::to_string_pretty(&records)? + "\n")?;
            info!("{} tiles written to {}", tiles.len(), dir.display());
        }
        Command::Recode {
            input,
            from,
            to,
            unknown_to_nodata,
            manifest,
        } => {
            let b = builtin_schemes();
            let map = match (from, to) {
                (SchemeArg::Nalcms, SchemeArg::General) => b.nalcms_to_general,
                (SchemeArg::Corine, SchemeArg::General) => b.corine_to_general,
                (f, t) if f.id() == t.id() => RecodeMap::identity(&f.scheme()),
                (f, t) => {
                    return Err(Error::InvalidArgument(format!(
                        "no built-in table from {} to {}",
                        f.id(),
                        t.id()
                    )))
                }
            };
            let map = if unknown_to_nodata {
                map.with_policy(UnknownPolicy::MapToNodata)
            } else {
                map
            };
            write(&recode(&read(&input)?, &map)?, need_out(c)?)?;
            if let Some(m) = manifest {
                to.scheme().write_manifest(Some(&map), &b.notes, &m)?;
            }
        }
        Command::TrainStyle { source, target, steps } => {
            let mut cfg: StyleTrainConfig = load_json(c.config.as_deref())?;
            if let Some(s) = steps {
                cfg.steps = s;
            }
            if let Some(s) = c.seed {
                cfg.seed = s;
            }
            let dir = need_out(c)?;
            let (_, log) = train_style(&unit_tiles(&source)?, &unit_tiles(&target)?, &cfg, Some(dir))?;
            let mut csv = String::from(crate::style::StyleLogRow::CSV_HEADER) + "\n";
            for r in &log {
                csv += &(r.csv() + "\n");
            }
            write_text(&dir.join("log.csv"), csv)?;
        }
        Command::Stylize {
            tiles,
            mode,
            target,
            models,
        } => {
            let pairs = list_tiles(&tiles)?;
            let source = unit_tiles(&tiles)?;
            let out = match mode {
                ModeArg::Stats => {
                    let t = target.ok_or_else(|| Error::InvalidArgument("stats mode needs --target".into()))?;
                    let s = extract_domain_style(&source)?;
                    let t = extract_domain_style(&unit_tiles(&t)?)?;
                    stylize_dataset(&source, &StylizeMode::Stats { source: &s, target: &t })?
                }
                ModeArg::Gan => {
                    let dir = models.ok_or_else(|| Error::InvalidArgument("gan mode needs --models".into()))?;
                    let m = StyleModels::load(&dir)?;
                    stylize_dataset(
                        &source,
                        &StylizeMode::Gan {
                            generator: &m.g_st,
                            target: &m.target_style,
                        },
                    )?
                }
            };
            let dir = need_out(c)?;
            mkdir(dir)?;
            for ((img, _), t) in pairs.iter().zip(&out) {
                write(t, &dir.join(img.file_name().unwrap()))?;
            }
        }
        Command::Mix { originals, stylized } => {
            let pairs = list_tiles(&originals)?;
            let sty: Vec<PathBuf> = pairs
                .iter()
                .map(|(i, _)| stylized.join(i.file_name().unwrap()))
                .collect();
            if let Some(missing) = sty.iter().find(|p| !p.is_file()) {
                return Err(Error::InvalidArgument(format!("{} is missing", missing.display())));
            }
            write_manifest(&build_mixed_dataset(&pairs, &sty)?, need_out(c)?)?;
        }
        Command::TrainSeg {
            manifest,
            validation,
            steps,
        } => {
            let mut cfg: SegTrainConfig = load_json(c.config.as_deref())?;
            if let Some(s) = steps {
                cfg.steps = s;
            }
            if let Some(s) = c.seed {
                cfg.seed = s;
            }
            let base = manifest.parent().unwrap_or(Path::new("."));
            let general = builtin_schemes().general;
            let samples = read_manifest(&manifest)?
                .iter()
                .map(|r| {
                    Ok(SegSample {
                        image: rescale_unit(&read(&base.join(&r.image_path))?)?,
                        labels: to_class_indices(&read(&base.join(&r.label_path))?, &general)?,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let images: Vec<Raster> = samples.iter().map(|s| s.image.clone()).collect();
            let extra = match validation {
                Some(v) => unit_tiles(&v)?,
                None => Vec::new(),
            };
            let means = compute_band_means(&[&images, &extra])?;
            let out = need_out(c)?;
            let (_, log) = train_seg(&samples, &cfg, &means, Some(out))?;
            write_seg_log(&log, &out.with_extension("csv"))?;
        }
        Command::Infer { ckpt, tiles } => {
            let (seg, means) = load_segmenter(&ckpt)?;
            let pairs = list_tiles(&tiles)?;
            let labels = infer(&seg, &unit_tiles(&tiles)?, &means)?;
            let general = builtin_schemes().general;
            let dir = need_out(c)?;
            mkdir(dir)?;
            for ((img, _), l) in pairs.iter().zip(&labels) {
                let name = img.file_name().unwrap().to_string_lossy().replace(".img.mbt", ".pred.mbt");
                write(&indices_to_general(l, &general)?, &dir.join(name))?;
            }
        }
        Command::Eval {
            reference,
            pred,
            classes,
            scheme,
            points,
        } => {
            let (r, p) = (read(&reference)?, read(&pred)?);
            let (r_idx, p_idx, names) = match (classes, scheme) {
                (_, Some(s)) => {
                    let s = s.scheme();
                    let names = s.entries().iter().map(|e| e.name.clone()).collect::<Vec<_>>();
                    (to_class_indices(&r, &s)?, to_class_indices(&p, &s)?, names)
                }
                (Some(k), None) => (r, p, (0..k).map(|i| format!("class_{i}")).collect()),
                (None, None) => return Err(Error::InvalidArgument("give --classes or --scheme".into())),
            };
            let m = confusion(&r_idx, &p_idx, names.len())?;
            let rep = iou_from_confusion(&m);
            let sample = match points {
                Some(n) => Some(random_point_validation(&r_idx, &p_idx, n, c.seed.unwrap_or(17))?),
                None => None,
            };
            let extras = ReportExtras {
                points: sample.as_ref().map(|s| (s, s)),
                ..ReportExtras::default()
            };
            match &c.out {
                Some(path) => write_report(&names, &rep, &rep, &extras, path)?,
                None => println!(
                    "{}",
                    serde_json::to_string_pretty(&json!({
                        "per_class": names.iter().zip(&rep.iou).map(|(n, v)| (n.clone(), json!(v))).collect::<serde_json::Map<_, _>>(),
                        "miou": rep.miou,
                        "acc": rep.pixel_accuracy,
                    }))?
                ),
            }
        }
        Command::Synth { style, tiles } => {
            let mut spec: SynthSpec = load_json(c.config.as_deref())?;
            if let Some(s) = c.seed {
                spec.seed = s;
            }
            if let Some(n) = tiles {
                spec.tiles_per_domain = n;
            }
            let config = write_synth(&spec, style.into(), need_out(c)?)?;
            println!("{}", config.display());
        }
        Command::Run => {
            let path = c
                .config
                .as_deref()
                .ok_or_else(|| Error::InvalidArgument("run needs --config".into()))?;
            let mut cfg = PipelineConfig::load(path)?;
            if let Some(s) = c.seed {
                cfg = cfg.with_seed(s);
            }
            if let Some(o) = &c.out {
                cfg.paths.out_dir = o.clone();
            }
            let summary = run(&cfg)?;
            info!(
                "executed {:?}, up to date {:?}",
                summary.executed, summary.skipped
            );
            println!("{}", summary.out_dir.join(crate::pipeline::REPORT_FILE).display());
        }
        Command::Render { labels, scheme } => {
            render_labelmap(&read(&labels)?, &scheme.scheme(), need_out(c)?)?;
        }
    }
    Ok(())
}

/// Parse `args`, run, and map the outcome to an exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_VALIDATION,
            };
        }
    };
    match execute(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            log::error!("{e}");
            if e.is_validation() {
                EXIT_VALIDATION
            } else {
                EXIT_RUNTIME
            }
        }
    }
}
