use std::path::Path;

use indexmap::IndexMap;
use serde_json::{json, Value};

use super::{IoUReport, PointSample};
use crate::error::{Error, Result};
use crate::labels::{ClassDistribution, CrosswalkMatrix, LabelScheme};
use crate::raster::{Raster, LABEL_NODATA};

/// Binary PPM of a label map in scheme colors; nodata and masked pixels are black.
pub fn render_ppm(labels: &Raster, scheme: &LabelScheme) -> Result<Vec<u8>> {
    if labels.bands() != 1 {
        return Err(Error::Dimension("label raster must have one band".into()));
    }
    let codes = labels.as_u8().ok_or_else(|| Error::DType {
        expected: "U8".into(),
        found: labels.dtype().to_string(),
    })?;
    let header = format!("P6\n{} {}\n255\n", labels.width(), labels.height());
    let mut out = Vec::with_capacity(header.len() + 3 * codes.len());
    out.extend_from_slice(header.as_bytes());
    for (p, &c) in codes.iter().enumerate() {
        if c == LABEL_NODATA || !labels.is_valid(p) {
            out.extend_from_slice(&[0, 0, 0]);
            continue;
        }
        let e = scheme.entry(c).ok_or(Error::UnknownCode { code: c, pixel: p })?;
        out.extend_from_slice(&e.color);
    }
    Ok(out)
}

pub fn render_labelmap(labels: &Raster, scheme: &LabelScheme, path: &Path) -> Result<()> {
    let bytes = render_ppm(labels, scheme)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

fn table(r: &IoUReport, names: &[String]) -> Value {
    let per_class: IndexMap<&str, f64> = names
        .iter()
        .map(String::as_str)
        .zip(r.iou.iter().map(|&v| round2(v)))
        .collect();
    let absent: Vec<&str> = names
        .iter()
        .zip(&r.present)
        .filter(|(_, &p)| !p)
        .map(|(n, _)| n.as_str())
        .collect();
    json!({
        "per_class": per_class,
        "miou": round2(r.miou),
        "acc": r.pixel_accuracy.map(|a| round2(100.0 * a)),
        "absent": absent,
    })
}

/// Relative mIoU gain `adapted / baseline − 1`, `None` when the baseline is zero.
pub fn relative_gain(baseline: &IoUReport, adapted: &IoUReport) -> Option<f64> {
    (baseline.miou > 0.0).then(|| adapted.miou / baseline.miou - 1.0)
}

/// Everything that goes into the comparative report besides the two IoU tables.
#[derive(Clone, Debug, Default)]
pub struct ReportExtras<'a> {
    pub distributions: IndexMap<String, ClassDistribution>,
    pub crosswalk: Option<&'a CrosswalkMatrix>,
    pub points: Option<(&'a PointSample, &'a PointSample)>,
}

/// Comparative report. Percentages carry two decimals; the gain and deltas
/// are computed from unrounded values.
pub fn report_json(
    class_names: &[String],
    baseline: &IoUReport,
    adapted: &IoUReport,
    extras: &ReportExtras<'_>,
) -> Result<Value> {
    if baseline.classes() != class_names.len() || adapted.classes() != class_names.len() {
        return Err(Error::Shape(format!(
            "{} class names for reports with {} and {} classes",
            class_names.len(),
            baseline.classes(),
            adapted.classes()
        )));
    }
    let delta: IndexMap<&str, f64> = class_names
        .iter()
        .zip(baseline.iou.iter().zip(&adapted.iou))
        .map(|(n, (b, a))| (n.as_str(), round2(a - b)))
        .collect();
    let gain = match relative_gain(baseline, adapted) {
        Some(g) => json!((g * 1e4).round() / 1e4),
        None => json!("undefined"),
    };
    let gain_percent = match relative_gain(baseline, adapted) {
        Some(g) => json!(round2(100.0 * g)),
        None => json!("undefined"),
    };
    let mut v = json!({
        "baseline": table(baseline, class_names),
        "adapted": table(adapted, class_names),
        "per_class_delta": delta,
        "relative_gain": gain,
        "relative_gain_percent": gain_percent,
        "distributions": extras.distributions,
    });
    if let Some((b, a)) = extras.points {
        v["points"] = json!({
            "seed": a.seed,
            "n": a.points.len(),
            "agreement": a.agreement,
            "baseline_agreement": b.agreement,
        });
    }
    if let Some(c) = extras.crosswalk {
        v["crosswalk"] = serde_json::to_value(c)?;
    }
    Ok(v)
}

pub fn write_report(
    class_names: &[String],
    baseline: &IoUReport,
    adapted: &IoUReport,
    extras: &ReportExtras<'_>,
    path: &Path,
) -> Result<()> {
    let text = serde_json::to_string_pretty(&report_json(class_names, baseline, adapted, extras)?)?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::labels::builtin_schemes;

    fn names() -> Vec<String> {
        builtin_schemes()
            .general
            .entries()
            .iter()
            .map(|e| e.name.clone())
            .collect()
    }

    #[test]
    fn ppm_colors_and_header() {
        let g = builtin_schemes().general;
        let water = g.code_of("Water").unwrap();
        let r = Raster::from_u8(2, 1, 1, vec![water, 255]).unwrap();
        let bytes = render_ppm(&r, &g).unwrap();
        assert!(bytes.starts_with(b"P6\n2 1\n255\n"));
        let px = &bytes[bytes.len() - 6..];
        assert_eq!(&px[..3], &g.entry(water).unwrap().color);
        assert_eq!(&px[3..], &[0, 0, 0]);
        assert!(render_ppm(&Raster::from_u8(1, 1, 1, vec![40]).unwrap(), &g).is_err());
    }

    #[test]
    fn gain_for_published_rows() {
        let b = IoUReport::from_percentages(&[35.19, 22.98, 0.0, 0.0, 5.80, 0.0, 72.46, 11.98]).unwrap();
        let a = IoUReport::from_percentages(&[53.82, 22.46, 0.0, 19.92, 22.82, 33.33, 81.51, 28.80]).unwrap();
        let v = report_json(&names(), &b, &a, &ReportExtras::default()).unwrap();
        assert_eq!(v["baseline"]["miou"], 18.55);
        assert_eq!(v["adapted"]["miou"], 32.83);
        assert_eq!(v["relative_gain_percent"], 76.98);
        assert_eq!(v["per_class_delta"]["Settlement"], 33.33);
    }

    #[test]
    fn degenerate_gains() {
        let same = IoUReport::from_percentages(&[10.0; 8]).unwrap();
        let v = report_json(&names(), &same, &same, &ReportExtras::default()).unwrap();
        assert_eq!(v["relative_gain"], 0.0);
        let zero = IoUReport::from_percentages(&[0.0; 8]).unwrap();
        let v = report_json(&names(), &zero, &same, &ReportExtras::default()).unwrap();
        assert_eq!(v["relative_gain"], "undefined");
    }
}
