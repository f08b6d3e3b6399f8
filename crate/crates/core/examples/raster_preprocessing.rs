//! Band compositing, cloud masking, value shifting, rescaling and tiling of a
//! small generated scene, with an MBT round trip.

use xsensor::raster::{
    band_stats, composite_bands, estimate_shift_offsets, read, rescale_unit, set_nodata_mask, shift_values,
    tile_dataset, write, Raster, TileSpec,
};

fn main() -> xsensor::Result<()> {
    let (w, h) = (96, 64);
    let bands: Vec<Raster> = (0..6)
        .map(|b| {
            let data = (0..w * h).map(|i| 5000 + (b * 700 + (i % w) * 40 + (i / w) * 15) as u16).collect();
            Raster::from_u16(w, h, 1, data)
        })
        .collect::<xsensor::Result<_>>()?;
    let stack = composite_bands(&bands)?;

    // a cloud over the top-left corner
    let cloud: Vec<bool> = (0..w * h).map(|i| i % w < 20 && i / w < 20).collect();
    let masked = set_nodata_mask(&stack, &cloud)?;
    println!("valid pixels: {} of {}", masked.valid_count(), masked.pixels());

    let stats = band_stats(&masked, 256)?;
    let offsets = estimate_shift_offsets(&stats, 0.0)?;
    println!("per-band offsets: {offsets:?}");
    let shifted = shift_values(&masked, &offsets)?;
    let unit = rescale_unit(&shifted)?;
    let v = unit.as_f32().unwrap();
    let (lo, hi) = v.iter().fold((f32::MAX, f32::MIN), |(a, b), &x| (a.min(x), b.max(x)));
    println!("rescaled range: [{lo:.4}, {hi:.4}]");

    let labels = Raster::from_u8(w, h, 1, (0..w * h).map(|i| 1 + ((i % w) / 32) as u8).collect())?;
    let tiles = tile_dataset(&unit, &labels, &TileSpec::new(32))?;
    for t in &tiles {
        println!("tile at ({:>2}, {:>2}) valid {:.2}", t.record.x, t.record.y, t.record.valid_fraction);
    }

    let dir = tempfile::tempdir().expect("temporary directory");
    let path = dir.path().join("stack.mbt");
    write(&masked, &path)?;
    assert_eq!(read(&path)?, masked);
    println!("MBT round trip ok ({} bytes)", std::fs::metadata(&path).map(|m| m.len()).unwrap_or(0));
    Ok(())
}
