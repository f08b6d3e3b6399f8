//! Train the segmenter on synthetic source tiles and score it on the target.

use xsensor::evaluation::{confusion, iou_from_confusion, to_class_indices, ConfusionMatrix};
use xsensor::labels::{builtin_schemes, recode, RecodeMap};
use xsensor::pipeline::{synth_benchmark, SynthSpec};
use xsensor::raster::{rescale_unit, shift_values, tile_dataset, Raster, Tile, TileSpec};
use xsensor::segmentation::{compute_band_means, infer, train_seg, SegSample, SegTrainConfig};

fn main() -> xsensor::Result<()> {
    let spec = SynthSpec { tiles_per_domain: 8, tile_size: 32, region_size: 16, ..SynthSpec::default() };
    let d = synth_benchmark(&spec)?;
    let s = builtin_schemes();
    let prepare = |img: &Raster, lab: &Raster, offset: u16, to_general: &RecodeMap| {
        let unit = rescale_unit(&shift_values(img, &[offset; 6])?)?;
        let general = recode(lab, to_general)?;
        tile_dataset(&unit, &general, &TileSpec::new(32))
    };
    let src = prepare(&d.source_image, &d.source_labels, spec.source_offset, &s.nalcms_to_general)?;
    let tgt = prepare(&d.target_image, &d.target_labels, 0, &s.corine_to_general)?;

    let samples = src
        .iter()
        .map(|t| Ok(SegSample { image: t.image.clone(), labels: to_class_indices(&t.labels, &s.general)? }))
        .collect::<xsensor::Result<Vec<_>>>()?;
    let images: Vec<Raster> = src.iter().map(|t| t.image.clone()).collect();
    let means = compute_band_means(&[&images])?;
    let cfg = SegTrainConfig { steps: 300, batch: 4, base_lr: 1e-3, ..SegTrainConfig::default() };
    let (seg, log) = train_seg(&samples, &cfg, &means, None)?;
    println!("loss {:.3} -> {:.3}", log[0].loss, log.last().unwrap().loss);

    let score = |tiles: &[Tile]| -> xsensor::Result<(f64, f64)> {
        let images: Vec<Raster> = tiles.iter().map(|t| t.image.clone()).collect();
        let mut m = ConfusionMatrix::new(8);
        for (p, t) in infer(&seg, &images, &means)?.iter().zip(tiles) {
            m.merge(&confusion(&to_class_indices(&t.labels, &s.general)?, p, 8)?)?;
        }
        let r = iou_from_confusion(&m);
        Ok((r.miou, 100.0 * r.pixel_accuracy.unwrap_or(0.0)))
    };
    // mIoU averages all 8 General classes, absent ones included
    for (name, tiles) in [("source", &src), ("target", &tgt)] {
        let (miou, acc) = score(tiles)?;
        println!("{name}: mIoU {miou:.2}, pixel accuracy {acc:.1}%");
    }
    Ok(())
}
