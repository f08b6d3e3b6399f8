use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use super::{LabelScheme, RecodeMap, UnknownPolicy};
use crate::error::{Error, Result};
use crate::raster::{DType, Raster, Samples, LABEL_NODATA};

fn label_codes(labels: &Raster) -> Result<&[u8]> {
    if labels.bands() != 1 {
        return Err(Error::Dimension(format!(
            "label raster has {} bands, expected 1",
            labels.bands()
        )));
    }
    labels.expect_dtype(DType::U8)?;
    Ok(labels.as_u8().unwrap())
}

/// Apply `map` to every pixel. The validity mask is carried over unchanged
/// and nodata stays nodata.
pub fn recode(labels: &Raster, map: &RecodeMap) -> Result<Raster> {
    let src = label_codes(labels)?;
    let mut out = Vec::with_capacity(src.len());
    for (p, &code) in src.iter().enumerate() {
        let mapped = match (code, map.get(code)) {
            (LABEL_NODATA, _) => LABEL_NODATA,
            (_, Some(c)) => c,
            (_, None) if !labels.is_valid(p) => LABEL_NODATA,
            (_, None) => match map.unknown_policy {
                UnknownPolicy::Error => return Err(Error::UnknownCode { code, pixel: p }),
                UnknownPolicy::MapToNodata => LABEL_NODATA,
            },
        };
        out.push(mapped);
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

/// Fraction of valid pixels per class, in scheme entry order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassDistribution {
    pub scheme_id: String,
    pub valid_pixels: u64,
    /// Class name → fraction of valid pixels; every scheme entry is present.
    pub fractions: IndexMap<String, f64>,
    #[serde(skip)]
    codes: Vec<u8>,
}

impl ClassDistribution {
    pub fn fraction(&self, code: u8) -> Option<f64> {
        let i = self.codes.iter().position(|&c| c == code)?;
        Some(self.fractions[i])
    }

    pub fn codes(&self) -> &[u8] {
        &self.codes
    }

    /// Distribution of the recoded classes: each target fraction is the sum
    /// of the source fractions mapped onto it.
    pub fn push_forward(&self, map: &RecodeMap, to: &LabelScheme) -> Result<ClassDistribution> {
        if map.from_scheme != self.scheme_id || map.to_scheme != to.id() {
            return Err(Error::InvalidArgument(format!(
                "map `{}`→`{}` does not apply to `{}`→`{}`",
                map.from_scheme,
                map.to_scheme,
                self.scheme_id,
                to.id()
            )));
        }
        let mut sums = vec![0.0f64; to.len()];
        for (&code, &f) in self.codes.iter().zip(self.fractions.values()) {
            let target = map
                .get(code)
                .and_then(|t| to.index_of(t))
                .ok_or_else(|| Error::InvalidArgument(format!("code {code} is not mapped")))?;
            sums[target] += f;
        }
        Ok(ClassDistribution {
            scheme_id: to.id().to_string(),
            valid_pixels: self.valid_pixels,
            fractions: to.entries().iter().map(|e| e.name.clone()).zip(sums).collect(),
            codes: to.entries().iter().map(|e| e.code).collect(),
        })
    }
}

/// Per-class fractions over valid, non-nodata pixels.
pub fn class_distribution(labels: &Raster, scheme: &LabelScheme) -> Result<ClassDistribution> {
    let src = label_codes(labels)?;
    let mut counts = vec![0u64; scheme.len()];
    let mut valid = 0u64;
    for (p, &code) in src.iter().enumerate() {
        if !labels.label_valid(p) {
            continue;
        }
        let i = scheme
            .index_of(code)
            .ok_or(Error::UnknownCode { code, pixel: p })?;
        counts[i] += 1;
        valid += 1;
    }
    if valid == 0 {
        return Err(Error::Empty("label raster has no valid pixels".into()));
    }
    Ok(ClassDistribution {
        scheme_id: scheme.id().to_string(),
        valid_pixels: valid,
        fractions: scheme
            .entries()
            .iter()
            .zip(&counts)
            .map(|(e, &c)| (e.name.clone(), c as f64 / valid as f64))
            .collect(),
        codes: scheme.entries().iter().map(|e| e.code).collect(),
    })
}

/// Co-occurrence counts of two co-registered label rasters.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrosswalkMatrix {
    /// Sorted codes seen in raster A on the jointly valid set.
    pub codes_a: Vec<u8>,
    pub codes_b: Vec<u8>,
    /// `counts[i][j]` pairs `codes_a[i]` with `codes_b[j]`.
    pub counts: Vec<Vec<u64>>,
}

impl CrosswalkMatrix {
    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn get(&self, a: u8, b: u8) -> u64 {
        match (
            self.codes_a.binary_search(&a),
            self.codes_b.binary_search(&b),
        ) {
            (Ok(i), Ok(j)) => self.counts[i][j],
            _ => 0,
        }
    }

    pub fn row_marginals(&self) -> Vec<u64> {
        self.counts.iter().map(|r| r.iter().sum()).collect()
    }

    pub fn col_marginals(&self) -> Vec<u64> {
        (0..self.codes_b.len())
            .map(|j| self.counts.iter().map(|r| r[j]).sum())
            .collect()
    }
}

/// Count code pairs over pixels valid in both rasters.
pub fn crosswalk(labels_a: &Raster, labels_b: &Raster) -> Result<CrosswalkMatrix> {
    let a = label_codes(labels_a)?;
    let b = label_codes(labels_b)?;
    if (labels_a.width(), labels_a.height()) != (labels_b.width(), labels_b.height()) {
        return Err(Error::Dimension(format!(
            "crosswalk of {}x{} and {}x{} rasters",
            labels_a.width(),
            labels_a.height(),
            labels_b.width(),
            labels_b.height()
        )));
    }
    let mut dense = vec![[0u64; 256]; 256];
    for p in 0..a.len() {
        if labels_a.label_valid(p) && labels_b.label_valid(p) {
            dense[a[p] as usize][b[p] as usize] += 1;
        }
    }
    let codes_a: Vec<u8> = (0..=255u8)
        .filter(|&i| dense[i as usize].iter().any(|&c| c > 0))
        .collect();
    let codes_b: Vec<u8> = (0..=255u8)
        .filter(|&j| dense.iter().any(|r| r[j as usize] > 0))
        .collect();
    let counts = codes_a
        .iter()
        .map(|&i| codes_b.iter().map(|&j| dense[i as usize][j as usize]).collect())
        .collect();
    Ok(CrosswalkMatrix {
        codes_a,
        codes_b,
        counts,
    })
}
