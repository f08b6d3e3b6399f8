//! IoU, random-point validation and the comparative report for a pair of
//! General-scheme maps, plus a rendered label map.

use xsensor::evaluation::{
    confusion, iou_from_confusion, random_point_validation, render_ppm, report_json, to_class_indices,
    IoUReport, ReportExtras,
};
use xsensor::labels::builtin_schemes;
use xsensor::raster::Raster;

fn main() -> xsensor::Result<()> {
    let g = builtin_schemes().general;
    let names: Vec<String> = g.entries().iter().map(|e| e.name.clone()).collect();

    let reference = Raster::from_u8(32, 32, 1, (0..1024).map(|i| 1 + ((i % 32) / 4) as u8).collect())?;
    let noisy = |flip: usize| -> xsensor::Result<Raster> {
        let d = reference.as_u8().unwrap().iter().enumerate().map(|(i, &c)| if i % flip == 0 { 1 + c % 8 } else { c });
        Raster::from_u8(32, 32, 1, d.collect())
    };
    let (baseline, adapted) = (noisy(2)?, noisy(7)?);
    let score = |p: &Raster| -> xsensor::Result<IoUReport> {
        Ok(iou_from_confusion(&confusion(&to_class_indices(&reference, &g)?, &to_class_indices(p, &g)?, 8)?))
    };
    let (b, a) = (score(&baseline)?, score(&adapted)?);
    let pb = random_point_validation(&reference, &baseline, 100, 17)?;
    let pa = random_point_validation(&reference, &adapted, 100, 17)?;
    let extras = ReportExtras { points: Some((&pb, &pa)), ..ReportExtras::default() };
    let report = report_json(&names, &b, &a, &extras)?;
    println!("{}", serde_json::to_string_pretty(&report).unwrap());

    let published = IoUReport::from_percentages(&[53.82, 22.46, 0.0, 19.92, 22.82, 33.33, 81.51, 28.80])?;
    println!("published adapted mIoU {:.4}", published.miou);

    let ppm = render_ppm(&adapted, &g)?;
    println!("rendered {} bytes of PPM", ppm.len());
    Ok(())
}
