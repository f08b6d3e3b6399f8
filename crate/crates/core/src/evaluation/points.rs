use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::Raster;

pub const DEFAULT_POINTS: usize = 100;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Point {
    pub x: usize,
    pub y: usize,
    pub reference: u8,
    pub predicted: u8,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointSample {
    pub seed: u64,
    pub points: Vec<Point>,
    pub agreement: f64,
}

/// `n` distinct jointly-valid pixels drawn uniformly without replacement.
pub fn random_point_validation(
    reference: &Raster,
    prediction: &Raster,
    n: usize,
    seed: u64,
) -> Result<PointSample> {
    if (reference.width(), reference.height()) != (prediction.width(), prediction.height()) {
        return Err(Error::Dimension("reference and prediction differ in size".into()));
    }
    if reference.bands() != 1 || prediction.bands() != 1 {
        return Err(Error::Dimension("label rasters must have one band".into()));
    }
    if n == 0 {
        return Err(Error::InvalidArgument("at least one point is required".into()));
    }
    let valid: Vec<usize> = (0..reference.pixels())
        .filter(|&p| reference.label_valid(p) && prediction.label_valid(p))
        .collect();
    if valid.len() < n {
        return Err(Error::Empty(format!(
            "{} jointly valid pixels, {n} points requested",
            valid.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = reference.width();
    let points: Vec<Point> = rand::seq::index::sample(&mut rng, valid.len(), n)
        .into_iter()
        .map(|i| {
            let p = valid[i];
            Point {
                x: p % w,
                y: p / w,
                reference: reference.get(0, p) as u8,
                predicted: prediction.get(0, p) as u8,
            }
        })
        .collect();
    let agree = points.iter().filter(|p| p.reference == p.predicted).count();
    Ok(PointSample {
        seed,
        agreement: agree as f64 / n as f64,
        points,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn identical_maps_agree_fully_and_are_deterministic() {
        let r = Raster::from_u8(20, 20, 1, (0..400).map(|i| (i % 5) as u8).collect()).unwrap();
        let a = random_point_validation(&r, &r, 100, 9).unwrap();
        assert_eq!(a.agreement, 1.0);
        assert_eq!(a, random_point_validation(&r, &r, 100, 9).unwrap());
        let distinct: HashSet<_> = a.points.iter().map(|p| (p.x, p.y)).collect();
        assert_eq!(distinct.len(), 100);
    }

    #[test]
    fn points_avoid_invalid_pixels() {
        let mut codes = vec![1u8; 100];
        codes[..50].fill(255);
        let r = Raster::from_u8(10, 10, 1, codes).unwrap();
        let s = random_point_validation(&r, &r, 50, 3).unwrap();
        assert!(s.points.iter().all(|p| p.y >= 5));
        assert!(random_point_validation(&r, &r, 51, 3).is_err());
    }
}
