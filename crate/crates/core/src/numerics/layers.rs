//! Tape-free entry points for single layers and the adversarial loss terms.

use super::tape::{plane_moments, Activation, Tape, INSTANCE_EPS, PROB_EPS};
use super::tensor::Tensor;
use crate::error::{Error, Result};

pub fn conv2d(x: &Tensor, w: &Tensor, b: &Tensor, stride: usize, pad: usize) -> Result<Tensor> {
    let mut tape = Tape::new();
    let (x, w, b) = (tape.input(x.clone()), tape.input(w.clone()), tape.input(b.clone()));
    let y = tape.conv2d(x, w, b, stride, pad)?;
    Ok(tape.value(y).clone())
}

pub fn upsample2x(x: &Tensor) -> Result<Tensor> {
    let mut tape = Tape::new();
    let x = tape.input(x.clone());
    let y = tape.upsample2x(x)?;
    Ok(tape.value(y).clone())
}

pub fn activation(x: &Tensor, kind: Activation) -> Tensor {
    let data = x.data().iter().map(|&v| kind.apply(v)).collect();
    Tensor::new(x.shape(), data).expect("same shape")
}

/// Per-(sample, channel) mean and ε-stabilized population std, each `[N, C]`.
pub fn instance_stats(x: &Tensor) -> Result<(Tensor, Tensor)> {
    let (n, c, h, w) = x.dims4()?;
    let hw = h * w;
    let mut mu = Vec::with_capacity(n * c);
    let mut sigma = Vec::with_capacity(n * c);
    for plane in x.data().chunks_exact(hw) {
        let (m, v) = plane_moments(plane);
        mu.push(m as f32);
        sigma.push((v + INSTANCE_EPS as f64).sqrt() as f32);
    }
    Ok((Tensor::new(&[n, c], mu)?, Tensor::new(&[n, c], sigma)?))
}

pub fn adain_apply(content: &Tensor, style_mu: &Tensor, style_sigma: &Tensor) -> Result<Tensor> {
    let mut tape = Tape::new();
    let x = tape.input(content.clone());
    let m = tape.input(style_mu.clone());
    let s = tape.input(style_sigma.clone());
    let y = tape.adain(x, m, s)?;
    Ok(tape.value(y).clone())
}

/// Values of the adversarial objective for one discriminator evaluation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GanTerms {
    /// `E[log D(x_T)] + E[log(1 − D(G(x_S)))]`
    pub objective: f64,
    /// Discriminator descent loss, `−objective`.
    pub loss_d: f64,
    /// Non-saturating generator loss, `−E[log D(G(x_S))]`.
    pub loss_g: f64,
}

pub fn gan_terms(d_real: &Tensor, d_fake: &Tensor) -> Result<GanTerms> {
    if !d_real.is_finite() || !d_fake.is_finite() {
        return Err(Error::NonFinite("discriminator output".into()));
    }
    if d_real.is_empty() || d_fake.is_empty() {
        return Err(Error::Empty("discriminator output".into()));
    }
    let mean_log = |t: &Tensor, f: fn(f64) -> f64| {
        t.data()
            .iter()
            .map(|&p| f((p as f64).clamp(PROB_EPS, 1.0 - PROB_EPS)).ln())
            .sum::<f64>()
            / t.len() as f64
    };
    let real = mean_log(d_real, |p| p);
    let fake_neg = mean_log(d_fake, |p| 1.0 - p);
    let fake = mean_log(d_fake, |p| p);
    let objective = real + fake_neg;
    Ok(GanTerms {
        objective,
        loss_d: -objective,
        loss_g: -fake,
    })
}
