use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels::{CORINE, GENERAL, NALCMS};
use crate::raster::TileSpec;
use crate::segmentation::SegTrainConfig;
use crate::style::StyleTrainConfig;

pub const CONFIG_VERSION: u32 = 1;

/// Scene and output locations. Relative paths resolve against the config file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Paths {
    pub source_image: PathBuf,
    pub source_labels: PathBuf,
    pub target_image: PathBuf,
    /// Reference labels of the target domain; used only for evaluation.
    pub target_labels: PathBuf,
    pub out_dir: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Schemes {
    pub source: String,
    pub target: String,
}

impl Default for Schemes {
    fn default() -> Self {
        Schemes {
            source: NALCMS.into(),
            target: CORINE.into(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShiftSpec {
    #[default]
    None,
    Offsets(Vec<u16>),
    /// Estimate each band's offset at this lower percentile of its histogram.
    Percentile(f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Preprocessing {
    pub source_shift: ShiftSpec,
    pub target_shift: ShiftSpec,
    pub tile: TileSpec,
}

impl Default for Preprocessing {
    fn default() -> Self {
        Preprocessing {
            source_shift: ShiftSpec::None,
            target_shift: ShiftSpec::None,
            tile: TileSpec::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StyleModeName {
    Stats,
    #[default]
    Gan,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StyleSection {
    pub mode: StyleModeName,
    pub train: StyleTrainConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalSection {
    pub seed: u64,
    pub points: usize,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            seed: 17,
            points: crate::evaluation::DEFAULT_POINTS,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub version: u32,
    pub paths: Paths,
    #[serde(default)]
    pub schemes: Schemes,
    #[serde(default)]
    pub preprocessing: Preprocessing,
    #[serde(default)]
    pub style: StyleSection,
    #[serde(default)]
    pub segmentation: SegTrainConfig,
    #[serde(default)]
    pub evaluation: EvalSection,
}

impl PipelineConfig {
    pub fn new(paths: Paths) -> Self {
        PipelineConfig {
            version: CONFIG_VERSION,
            paths,
            schemes: Schemes::default(),
            preprocessing: Preprocessing::default(),
            style: StyleSection::default(),
            segmentation: SegTrainConfig::default(),
            evaluation: EvalSection::default(),
        }
    }

    /// Parse a config file; relative paths become relative to its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: PipelineConfig =
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in cfg.paths_mut() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    fn paths_mut(&mut self) -> [&mut PathBuf; 5] {
        let p = &mut self.paths;
        [
            &mut p.source_image,
            &mut p.source_labels,
            &mut p.target_image,
            &mut p.target_labels,
            &mut p.out_dir,
        ]
    }

    /// Use `seed` for style training, segmentation training and point sampling.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.style.train.seed = seed;
        self.segmentation.seed = seed;
        self.evaluation.seed = seed;
        self
    }

    /// Everything checkable before any work starts.
    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return Err(Error::Config(format!(
                "config version {} is not supported (expected {CONFIG_VERSION})",
                self.version
            )));
        }
        let p = &self.paths;
        for (name, path) in [
            ("source_image", &p.source_image),
            ("source_labels", &p.source_labels),
            ("target_image", &p.target_image),
            ("target_labels", &p.target_labels),
        ] {
            if !path.is_file() {
                return Err(Error::Config(format!("paths.{name}: {} does not exist", path.display())));
            }
        }
        for (side, id) in [("source", &self.schemes.source), ("target", &self.schemes.target)] {
            if ![NALCMS, CORINE, GENERAL].contains(&id.as_str()) {
                return Err(Error::Config(format!("schemes.{side}: unknown scheme `{id}`")));
            }
        }
        for (side, s) in [
            ("source_shift", &self.preprocessing.source_shift),
            ("target_shift", &self.preprocessing.target_shift),
        ] {
            match s {
                ShiftSpec::Offsets(o) if o.len() != 6 => {
                    return Err(Error::Config(format!("preprocessing.{side}: need 6 offsets, got {}", o.len())))
                }
                ShiftSpec::Percentile(q) if !(0.0..=1.0).contains(q) => {
                    return Err(Error::Config(format!("preprocessing.{side}: percentile {q} outside [0, 1]")))
                }
                _ => {}
            }
        }
        self.preprocessing
            .tile
            .validate()
            .map_err(|e| Error::Config(format!("preprocessing.tile: {e}")))?;
        if self.preprocessing.tile.tile_size % 16 != 0 {
            return Err(Error::Config("preprocessing.tile.tile_size must be a multiple of 16".into()));
        }
        self.style.train.validate()?;
        self.segmentation.validate()?;
        if self.evaluation.points == 0 {
            return Err(Error::Config("evaluation.points must be positive".into()));
        }
        Ok(())
    }
}
