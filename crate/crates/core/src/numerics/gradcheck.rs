//! Central finite-difference checks of tape gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::params::ParamSet;
use super::replay::Replay;
use super::tape::{Tape, Var};
use crate::error::{Error, Result};

/// One checked parameter coordinate.
#[derive(Clone, Debug, PartialEq)]
pub struct CoordCheck {
    pub tensor: usize,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    /// `|analytic − numeric| / max(|analytic|, |numeric|)`, zero when both are zero.
    pub rel_err: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct GradCheck {
    pub coords: Vec<CoordCheck>,
}

impl GradCheck {
    pub fn max_rel_err(&self) -> f64 {
        self.coords.iter().map(|c| c.rel_err).fold(0.0, f64::max)
    }

    pub fn worst(&self) -> Option<&CoordCheck> {
        self.coords.iter().max_by(|a, b| a.rel_err.total_cmp(&b.rel_err))
    }
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    let d = a.abs().max(b.abs());
    if d == 0.0 {
        0.0
    } else {
        (a - b).abs() / d
    }
}

/// Compare reverse-mode gradients against fourth-order central differences
/// with step `h`: `(−L(θ+2h) + 8L(θ+h) − 8L(θ−h) + L(θ−2h)) / 12h`.
///
/// `record` builds an output node from the parameter leaves. The checked loss
/// is a fixed random projection `Σ wᵢ·yᵢ` of that output, with `w ~ N(0, 1)`
/// drawn from `seed`. Analytic gradients come from the single-precision tape;
/// the differences re-evaluate the recorded graph in double precision with
/// the activation pattern of the unperturbed point. `coords` coordinates are
/// drawn round-robin over the tensors, uniformly within each.
pub fn check_gradients(
    params: &ParamSet,
    coords: usize,
    h: f64,
    seed: u64,
    record: impl FnOnce(&mut Tape, &[Var]) -> Result<Var>,
) -> Result<GradCheck> {
    if params.is_empty() || params.tensors().iter().any(|t| t.is_empty()) {
        return Err(Error::Empty("gradient check needs non-empty parameters".into()));
    }
    if !(h > 0.0) {
        return Err(Error::InvalidArgument(format!("step {h} must be positive")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut tape = Tape::new();
    let vars = params.bind(&mut tape, true);
    let out = record(&mut tape, &vars)?;
    let weights: Vec<f32> = (0..tape.value(out).len())
        .map(|_| rng.sample::<f32, _>(StandardNormal))
        .collect();
    let loss = tape.weighted_sum(out, weights.clone())?;
    let grads = tape.backward(loss)?.collect(&vars);
    let replay = Replay::new(&tape, out)?;
    let project = |y: &[f64]| -> f64 { y.iter().zip(&weights).map(|(a, &w)| a * w as f64).sum() };

    let n = params.len();
    let mut checks = Vec::with_capacity(coords);
    for k in 0..coords {
        let tensor = k % n;
        let index = rng.random_range(0..params.tensors()[tensor].len());
        let theta = params.tensors()[tensor].data()[index] as f64;
        let at = |k: f64| -> Result<f64> { Ok(project(&replay.perturbed(vars[tensor], index, theta + k * h)?)) };
        let numeric = (8.0 * (at(1.0)? - at(-1.0)?) - (at(2.0)? - at(-2.0)?)) / (12.0 * h);
        let analytic = grads[tensor].data()[index] as f64;
        checks.push(CoordCheck {
            tensor,
            index,
            analytic,
            numeric,
            rel_err: rel_err(analytic, numeric),
        });
    }
    Ok(GradCheck { coords: checks })
}
