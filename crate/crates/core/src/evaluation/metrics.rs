use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels::LabelScheme;
use crate::raster::{DType, Raster, Samples, LABEL_NODATA};

const STRIPE_ROWS: usize = 64;

/// `counts[r * k + p]`: pixels of reference class `r` predicted as `p`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    k: usize,
    counts: Vec<u64>,
    ignored: u64,
}

impl ConfusionMatrix {
    pub fn new(k: usize) -> Self {
        ConfusionMatrix {
            k,
            counts: vec![0; k * k],
            ignored: 0,
        }
    }

    pub fn from_counts(k: usize, counts: Vec<u64>, ignored: u64) -> Result<Self> {
        if counts.len() != k * k {
            return Err(Error::Shape(format!("{} counts for K = {k}", counts.len())));
        }
        Ok(ConfusionMatrix { k, counts, ignored })
    }

    pub fn classes(&self) -> usize {
        self.k
    }

    pub fn get(&self, reference: usize, predicted: usize) -> u64 {
        self.counts[reference * self.k + predicted]
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn ignored(&self) -> u64 {
        self.ignored
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) -> Result<()> {
        if other.k != self.k {
            return Err(Error::Shape(format!("merging K = {} into K = {}", other.k, self.k)));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.ignored += other.ignored;
        Ok(())
    }
}

fn class_plane<'a>(r: &'a Raster, what: &str) -> Result<&'a [u8]> {
    if r.bands() != 1 {
        return Err(Error::Dimension(format!("{what} has {} bands, expected 1", r.bands())));
    }
    r.expect_dtype(DType::U8)?;
    Ok(r.as_u8().unwrap())
}

/// Confusion over pixels valid in both maps; codes are class indices `0..k`.
pub fn confusion(reference: &Raster, prediction: &Raster, k: usize) -> Result<ConfusionMatrix> {
    let a = class_plane(reference, "reference")?;
    let b = class_plane(prediction, "prediction")?;
    if (reference.width(), reference.height()) != (prediction.width(), prediction.height()) {
        return Err(Error::Dimension(format!(
            "reference is {}x{}, prediction is {}x{}",
            reference.width(),
            reference.height(),
            prediction.width(),
            prediction.height()
        )));
    }
    if k == 0 || k > LABEL_NODATA as usize {
        return Err(Error::InvalidArgument(format!("K = {k} outside 1..=255")));
    }
    let stripe = STRIPE_ROWS * reference.width().max(1);
    let stripes: Vec<Result<ConfusionMatrix>> = (0..a.len())
        .step_by(stripe.max(1))
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|start| {
            let mut m = ConfusionMatrix::new(k);
            for p in start..(start + stripe).min(a.len()) {
                if !(reference.label_valid(p) && prediction.label_valid(p)) {
                    m.ignored += 1;
                    continue;
                }
                let (r, q) = (a[p] as usize, b[p] as usize);
                if r >= k || q >= k {
                    return Err(Error::UnknownCode {
                        code: r.max(q) as u8,
                        pixel: p,
                    });
                }
                m.counts[r * k + q] += 1;
            }
            Ok(m)
        })
        .collect();
    let mut total = ConfusionMatrix::new(k);
    for s in stripes {
        total.merge(&s?)?;
    }
    Ok(total)
}

/// Replace scheme codes by their entry index so `confusion` can score them.
pub fn to_class_indices(labels: &Raster, scheme: &LabelScheme) -> Result<Raster> {
    let src = class_plane(labels, "label raster")?;
    let mut out = Vec::with_capacity(src.len());
    for (p, &c) in src.iter().enumerate() {
        if c == LABEL_NODATA || !labels.is_valid(p) {
            out.push(LABEL_NODATA);
            continue;
        }
        let i = scheme.index_of(c).ok_or(Error::UnknownCode { code: c, pixel: p })?;
        out.push(i as u8);
    }
    Raster::new(
        labels.width(),
        labels.height(),
        1,
        Samples::U8(out),
        labels.validmask().map(<[bool]>::to_vec),
        labels.geotransform(),
    )
}

/// Per-class IoU and mIoU in percent; pixel accuracy as a fraction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IoUReport {
    pub iou: Vec<f64>,
    /// Union > 0. Absent classes score 0 and still count towards the mean.
    pub present: Vec<bool>,
    pub miou: f64,
    /// `None` when the report was built from published per-class values.
    pub pixel_accuracy: Option<f64>,
}

impl IoUReport {
    /// Report from already computed per-class IoUs in percent.
    pub fn from_percentages(iou: &[f64]) -> Result<Self> {
        if iou.is_empty() {
            return Err(Error::Empty("no classes".into()));
        }
        if let Some(v) = iou.iter().find(|v| !(0.0..=100.0).contains(*v)) {
            return Err(Error::Range(format!("IoU {v} outside [0, 100]")));
        }
        Ok(IoUReport {
            iou: iou.to_vec(),
            present: vec![true; iou.len()],
            miou: mean_iou(iou),
            pixel_accuracy: None,
        })
    }

    pub fn classes(&self) -> usize {
        self.iou.len()
    }
}

/// Unweighted mean over every class, zeros included.
pub fn mean_iou(per_class: &[f64]) -> f64 {
    per_class.iter().sum::<f64>() / per_class.len() as f64
}

pub fn iou_from_confusion(m: &ConfusionMatrix) -> IoUReport {
    let k = m.classes();
    let mut iou = Vec::with_capacity(k);
    let mut present = Vec::with_capacity(k);
    let mut diag_sum = 0u64;
    for c in 0..k {
        let diag = m.get(c, c);
        let row: u64 = (0..k).map(|j| m.get(c, j)).sum();
        let col: u64 = (0..k).map(|i| m.get(i, c)).sum();
        let union = row + col - diag;
        diag_sum += diag;
        present.push(union > 0);
        iou.push(if union > 0 {
            100.0 * diag as f64 / union as f64
        } else {
            0.0
        });
    }
    let total = m.total();
    IoUReport {
        miou: if k > 0 { mean_iou(&iou) } else { 0.0 },
        iou,
        present,
        pixel_accuracy: Some(if total > 0 {
            diag_sum as f64 / total as f64
        } else {
            0.0
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn map(w: usize, h: usize, codes: &[u8]) -> Raster {
        Raster::from_u8(w, h, 1, codes.to_vec()).unwrap()
    }

    #[test]
    fn identical_maps_give_a_diagonal() {
        let r = map(3, 1, &[0, 1, 1]);
        let m = confusion(&r, &r, 3).unwrap();
        assert_eq!(m.counts(), &[1, 0, 0, 0, 2, 0, 0, 0, 0]);
        let rep = iou_from_confusion(&m);
        assert_eq!(rep.iou, vec![100.0, 100.0, 0.0]);
        assert_eq!(rep.present, vec![true, true, false]);
        assert_eq!(rep.pixel_accuracy, Some(1.0));
    }

    #[test]
    fn single_off_diagonal_cell() {
        let m = confusion(&map(2, 2, &[0; 4]), &map(2, 2, &[1; 4]), 2).unwrap();
        assert_eq!(m.counts(), &[0, 4, 0, 0]);
    }

    #[test]
    fn two_by_two_example() {
        let m = confusion(&map(2, 2, &[0, 0, 1, 1]), &map(2, 2, &[0, 1, 1, 1]), 2).unwrap();
        let rep = iou_from_confusion(&m);
        assert!((rep.iou[0] - 50.0).abs() < 1e-12);
        assert!((rep.iou[1] - 200.0 / 3.0).abs() < 1e-12);
        assert!((rep.miou - 58.333333333333336).abs() < 1e-9);
    }

    #[test]
    fn ignored_pixels_and_errors() {
        let a = map(4, 1, &[0, 255, 1, 1])
            .with_validmask(Some(vec![true, true, true, false]))
            .unwrap();
        let b = map(4, 1, &[0, 0, 1, 1]);
        let m = confusion(&a, &b, 2).unwrap();
        assert_eq!((m.total(), m.ignored()), (2, 2));
        assert!(matches!(
            confusion(&map(1, 1, &[3]), &map(1, 1, &[0]), 2),
            Err(Error::UnknownCode { code: 3, pixel: 0 })
        ));
        assert!(confusion(&map(2, 1, &[0, 0]), &map(1, 2, &[0, 0]), 2).is_err());
    }

    #[test]
    fn table_rows_average_over_all_classes() {
        let base = IoUReport::from_percentages(&[35.19, 22.98, 0.0, 0.0, 5.80, 0.0, 72.46, 11.98]).unwrap();
        let adapted =
            IoUReport::from_percentages(&[53.82, 22.46, 0.0, 19.92, 22.82, 33.33, 81.51, 28.80]).unwrap();
        assert!((base.miou - 18.55).abs() <= 0.005);
        assert!((adapted.miou - 32.83).abs() <= 0.005);
    }
}
