//! Configuration-driven orchestration of the whole workflow, and the
//! synthetic two-domain benchmark used for end-to-end checks.

mod config;
mod run;
mod synth;

use std::path::{Path, PathBuf};

pub use config::{
    EvalSection, Paths, PipelineConfig, Preprocessing, Schemes, ShiftSpec, StyleModeName, StyleSection,
    CONFIG_VERSION,
};
pub use run::{
    run, sha256_file, RunSummary, StageRecord, ADAPTED_CKPT, BASELINE_CKPT, BASELINE_MANIFEST_FILE, MANIFEST_FILE,
    REPORT_FILE, STAGES_FILE,
};
pub use synth::{synth_benchmark, SynthDataset, SynthSpec};

use crate::error::{Error, Result};
use crate::raster::{write, TileSpec};
use crate::segmentation::SegTrainConfig;
use crate::style::StyleTrainConfig;

/// Pipeline settings sized for the synthetic benchmark on a small CPU.
pub fn synth_pipeline_config(spec: &SynthSpec, mode: StyleModeName, out_dir: PathBuf) -> PipelineConfig {
    let mut cfg = PipelineConfig::new(Paths {
        source_image: "source_image.mbt".into(),
        source_labels: "source_labels.mbt".into(),
        target_image: "target_image.mbt".into(),
        target_labels: "target_labels.mbt".into(),
        out_dir,
    });
    cfg.preprocessing = Preprocessing {
        source_shift: ShiftSpec::Offsets(vec![spec.source_offset; 6]),
        target_shift: ShiftSpec::None,
        tile: TileSpec::new(spec.tile_size),
    };
    cfg.style = StyleSection {
        mode,
        train: StyleTrainConfig {
            steps: 600,
            seed: spec.seed,
            ..StyleTrainConfig::default()
        },
    };
    cfg.segmentation = SegTrainConfig {
        steps: 400,
        seed: spec.seed,
        ..SegTrainConfig::default()
    };
    cfg.evaluation.seed = spec.seed;
    cfg
}

/// Write the four benchmark scenes, `synth.json` and a ready-to-run
/// `config.json` (outputs under `run/`) into `dir`. Returns the config path.
pub fn write_synth(spec: &SynthSpec, mode: StyleModeName, dir: &Path) -> Result<PathBuf> {
    let data = synth_benchmark(spec)?;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write(&data.source_image, &dir.join("source_image.mbt"))?;
    write(&data.source_labels, &dir.join("source_labels.mbt"))?;
    write(&data.target_image, &dir.join("target_image.mbt"))?;
    write(&data.target_labels, &dir.join("target_labels.mbt"))?;
    let spec_path = dir.join("synth.json");
    std::fs::write(&spec_path, serde_json::to_string_pretty(spec)? + "\n").map_err(|e| Error::io(&spec_path, e))?;
    let config = dir.join("config.json");
    synth_pipeline_config(spec, mode, "run".into()).save(&config)?;
    Ok(config)
}
