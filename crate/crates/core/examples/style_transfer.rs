//! Moment-matching and adversarial style transfer between the two synthetic
//! domains, plus the mixed original + stylized manifest.

use std::path::PathBuf;

use xsensor::pipeline::{synth_benchmark, SynthSpec};
use xsensor::raster::{rescale_unit, tile_dataset, Raster, TileSpec};
use xsensor::style::{
    build_mixed_dataset, extract_domain_style, stylize_dataset, train_style, StyleTrainConfig, StylizeMode,
};

fn tiles(image: &Raster, labels: &Raster, offset: u16) -> xsensor::Result<Vec<Raster>> {
    let shifted = xsensor::raster::shift_values(image, &[offset; 6])?;
    let unit = rescale_unit(&shifted)?;
    Ok(tile_dataset(&unit, labels, &TileSpec::new(32))?.into_iter().map(|t| t.image).collect())
}

/// Style of stylized U16 output, measured back in `[-1, 1]` space.
fn style_of(tiles: &[Raster]) -> xsensor::Result<Vec<f64>> {
    let unit = tiles.iter().map(rescale_unit).collect::<xsensor::Result<Vec<_>>>()?;
    Ok(extract_domain_style(&unit)?.mean)
}

fn main() -> xsensor::Result<()> {
    let spec = SynthSpec { tiles_per_domain: 8, tile_size: 32, region_size: 16, ..SynthSpec::default() };
    let d = synth_benchmark(&spec)?;
    let source = tiles(&d.source_image, &d.source_labels, spec.source_offset)?;
    let target = tiles(&d.target_image, &d.target_labels, 0)?;
    let s = extract_domain_style(&source)?;
    let t = extract_domain_style(&target)?;
    println!("source mean {:.3?}\ntarget mean {:.3?}", s.mean, t.mean);

    let stats = stylize_dataset(&source, &StylizeMode::Stats { source: &s, target: &t })?;
    println!("stats-mode mean {:.3?}", style_of(&stats)?);

    let cfg = StyleTrainConfig { steps: 40, batch: 2, ..StyleTrainConfig::default() };
    let (models, log) = train_style(&source, &target, &cfg, None)?;
    let last = log.last().unwrap();
    println!("gan step {}: {}", last.step, last.csv());
    let gan = stylize_dataset(&source, &StylizeMode::Gan { generator: &models.g_st, target: &t })?;
    println!("gan-mode mean   {:.3?}", style_of(&gan)?);

    let originals: Vec<(PathBuf, PathBuf)> = (0..source.len())
        .map(|i| (format!("src/{i}.img.mbt").into(), format!("src/{i}.lab.mbt").into()))
        .collect();
    let stylized: Vec<PathBuf> = (0..source.len()).map(|i| format!("sty/{i}.mbt").into()).collect();
    let manifest = build_mixed_dataset(&originals, &stylized)?;
    println!("mixed dataset: {} records", manifest.len());
    Ok(())
}
