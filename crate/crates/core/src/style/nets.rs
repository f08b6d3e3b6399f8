use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::DomainStyle;
use crate::error::{Error, Result};
use crate::numerics::{Activation, ParamSet, Tape, Tensor, Var};

pub const BANDS: usize = 6;
pub const GENERATOR_KIND: &str = "generator";
pub const DISCRIMINATOR_KIND: &str = "discriminator";

const GEN_WIDTHS: [usize; 4] = [BANDS, 32, 64, 128];
const DISC_WIDTHS: [usize; 5] = [BANDS, 32, 64, 128, 1];
const BOTTLENECK: usize = 128;
/// Style vector: per-band mean then per-band std.
pub const STYLE_DIM: usize = 2 * BANDS;
const SKIP_CLAMP: f32 = 0.999;

/// Style-conditioned encoder/decoder.
///
/// Three stride-2 3×3 convs (6→32→64→128), AdaIN at the bottleneck with
/// `μ = W_μ s + b_μ` and `σ = exp(W_σ s + b_σ)` from the 12-d style vector
/// `s`, three upsample + 3×3 convs (128→64→32→6), and a 1×1 projection of
/// `atanh(x)` added before the final tanh. The projection starts as the
/// identity and the last decoder conv at zero, so an untrained generator
/// reproduces its input.
#[derive(Clone, Debug, PartialEq)]
pub struct Generator {
    pub params: ParamSet,
}

impl Generator {
    pub fn new(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = ParamSet::default();
        for i in 0..3 {
            let (cin, cout) = (GEN_WIDTHS[i], GEN_WIDTHS[i + 1]);
            p.push_uniform(&format!("enc{i}.w"), &[cout, cin, 3, 3], cin * 9, &mut rng);
            p.push_uniform(&format!("enc{i}.b"), &[cout], cin * 9, &mut rng);
        }
        p.push_uniform("style_mu.w", &[BOTTLENECK, STYLE_DIM], STYLE_DIM, &mut rng);
        p.push_uniform("style_mu.b", &[BOTTLENECK], STYLE_DIM, &mut rng);
        p.push_uniform("style_sigma.w", &[BOTTLENECK, STYLE_DIM], STYLE_DIM, &mut rng);
        p.push_uniform("style_sigma.b", &[BOTTLENECK], STYLE_DIM, &mut rng);
        for i in 0..3 {
            let (cin, cout) = (GEN_WIDTHS[3 - i], GEN_WIDTHS[2 - i]);
            if i == 2 {
                p.push(format!("dec{i}.w"), Tensor::zeros(&[cout, cin, 3, 3]));
                p.push(format!("dec{i}.b"), Tensor::zeros(&[cout]));
            } else {
                p.push_uniform(&format!("dec{i}.w"), &[cout, cin, 3, 3], cin * 9, &mut rng);
                p.push_uniform(&format!("dec{i}.b"), &[cout], cin * 9, &mut rng);
            }
        }
        let mut eye = Tensor::zeros(&[BANDS, BANDS, 1, 1]);
        for b in 0..BANDS {
            eye.data_mut()[b * BANDS + b] = 1.0;
        }
        p.push("skip.w", eye);
        p.push("skip.b", Tensor::zeros(&[BANDS]));
        Generator { params: p }
    }

    pub fn from_params(params: ParamSet) -> Result<Self> {
        check_layout(&Generator::new(0).params, &params, "generator")?;
        Ok(Generator { params })
    }

    /// Records the forward pass with parameter leaves `p` (see
    /// [`ParamSet::bind`]); returns the stylized batch plus the bottleneck
    /// before and after AdaIN. `style` is `[N, 12]`.
    pub fn forward(
        &self,
        tape: &mut Tape,
        p: &[Var],
        x: &Tensor,
        style: &Tensor,
    ) -> Result<(Var, Var, Var)> {
        let (_, c, h, w) = x.dims4()?;
        if c != BANDS || h % 8 != 0 || w % 8 != 0 || h == 0 || w == 0 {
            return Err(Error::Shape(format!(
                "generator input must be [N, {BANDS}, 8a, 8b], got {:?}",
                x.shape()
            )));
        }
        let skip_in = Tensor::new(
            x.shape(),
            x.data()
                .iter()
                .map(|v| v.clamp(-SKIP_CLAMP, SKIP_CLAMP).atanh())
                .collect(),
        )?;
        let xin = tape.input(x.clone());
        let mut h = xin;
        for i in 0..3 {
            let c = tape.conv2d(h, p[2 * i], p[2 * i + 1], 2, 1)?;
            h = tape.activation(c, Activation::LeakyRelu);
        }
        let s = tape.input(style.clone());
        let mu = tape.linear(s, p[6], p[7])?;
        let log_sigma = tape.linear(s, p[8], p[9])?;
        let sigma = tape.exp(log_sigma);
        let pre = h;
        let styled = tape.adain(h, mu, sigma)?;
        h = styled;
        for i in 0..3 {
            let up = tape.upsample2x(h)?;
            let c = tape.conv2d(up, p[10 + 2 * i], p[11 + 2 * i], 1, 1)?;
            h = if i < 2 {
                tape.activation(c, Activation::LeakyRelu)
            } else {
                c
            };
        }
        let sk = tape.input(skip_in);
        let proj = tape.conv2d(sk, p[16], p[17], 1, 0)?;
        let sum = tape.add(h, proj)?;
        Ok((tape.activation(sum, Activation::Tanh), pre, styled))
    }

    /// Stylize a batch `[N, 6, H, W]` towards `style`.
    pub fn apply(&self, x: &Tensor, style: &DomainStyle) -> Result<Tensor> {
        let n = x.dims4()?.0;
        let s = style_batch(style, n)?;
        let mut tape = Tape::new();
        let p = self.params.bind(&mut tape, false);
        let (y, _, _) = self.forward(&mut tape, &p, x, &s)?;
        Ok(tape.value(y).clone())
    }

    /// Bottleneck activations `(before, after)` AdaIN.
    pub fn bottleneck(&self, x: &Tensor, style: &DomainStyle) -> Result<(Tensor, Tensor)> {
        let n = x.dims4()?.0;
        let s = style_batch(style, n)?;
        let mut tape = Tape::new();
        let p = self.params.bind(&mut tape, false);
        let (_, pre, post) = self.forward(&mut tape, &p, x, &s)?;
        Ok((tape.value(pre).clone(), tape.value(post).clone()))
    }

    /// The `μ` and `σ` injected at the bottleneck for `style`.
    pub fn injected_style(&self, style: &DomainStyle) -> Result<(Tensor, Tensor)> {
        let s = style_batch(style, 1)?;
        let mut tape = Tape::new();
        let p = self.params.bind(&mut tape, false);
        let sv = tape.input(s);
        let mu = tape.linear(sv, p[6], p[7])?;
        let ls = tape.linear(sv, p[8], p[9])?;
        let sigma = tape.exp(ls);
        Ok((tape.value(mu).clone(), tape.value(sigma).clone()))
    }
}

/// Four stride-2 3×3 convs (6→32→64→128→1) with a sigmoid patch map.
#[derive(Clone, Debug, PartialEq)]
pub struct Discriminator {
    pub params: ParamSet,
}

impl Discriminator {
    pub fn new(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = ParamSet::default();
        for i in 0..4 {
            let (cin, cout) = (DISC_WIDTHS[i], DISC_WIDTHS[i + 1]);
            p.push_uniform(&format!("d{i}.w"), &[cout, cin, 3, 3], cin * 9, &mut rng);
            p.push_uniform(&format!("d{i}.b"), &[cout], cin * 9, &mut rng);
        }
        Discriminator { params: p }
    }

    pub fn from_params(params: ParamSet) -> Result<Self> {
        check_layout(&Discriminator::new(0).params, &params, "discriminator")?;
        Ok(Discriminator { params })
    }

    pub fn forward(&self, tape: &mut Tape, p: &[Var], x: Var) -> Result<Var> {
        let mut h = x;
        for i in 0..4 {
            let c = tape.conv2d(h, p[2 * i], p[2 * i + 1], 2, 1)?;
            let act = if i < 3 {
                Activation::LeakyRelu
            } else {
                Activation::Sigmoid
            };
            h = tape.activation(c, act);
        }
        Ok(h)
    }

    /// Patch probabilities `[N, 1, H/16, W/16]` that each input is real.
    pub fn score(&self, x: &Tensor) -> Result<Tensor> {
        let mut tape = Tape::new();
        let p = self.params.bind(&mut tape, false);
        let xv = tape.input(x.clone());
        let y = self.forward(&mut tape, &p, xv)?;
        Ok(tape.value(y).clone())
    }
}

fn check_layout(template: &ParamSet, params: &ParamSet, what: &str) -> Result<()> {
    let same = template.names() == params.names()
        && template
            .tensors()
            .iter()
            .zip(params.tensors())
            .all(|(a, b)| a.shape() == b.shape());
    if same {
        Ok(())
    } else {
        Err(Error::Shape(format!("{what} parameter layout mismatch")))
    }
}

/// `[n, 12]` copies of the style vector.
pub fn style_batch(style: &DomainStyle, n: usize) -> Result<Tensor> {
    if style.bands() != BANDS {
        return Err(Error::Shape(format!(
            "style has {} bands, the generator needs {BANDS}",
            style.bands()
        )));
    }
    let v: Vec<f32> = style
        .mean
        .iter()
        .chain(&style.std)
        .map(|&x| x as f32)
        .collect();
    Tensor::new(&[n, STYLE_DIM], v.repeat(n))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::instance_stats;
    use crate::numerics::tape::plane_moments;
    use rand::Rng;

    fn batch(n: usize, size: usize, seed: u64) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let len = n * BANDS * size * size;
        Tensor::new(
            &[n, BANDS, size, size],
            (0..len).map(|_| rng.random_range(-0.9f32..0.9)).collect(),
        )
        .unwrap()
    }

    fn style() -> DomainStyle {
        DomainStyle {
            mean: vec![-0.2, -0.1, 0.0, 0.1, 0.2, 0.3],
            std: vec![0.1, 0.2, 0.1, 0.2, 0.1, 0.2],
        }
    }

    #[test]
    fn untrained_generator_is_near_identity_and_deterministic() {
        let g = Generator::new(3);
        let x = batch(2, 16, 1);
        let y = g.apply(&x, &style()).unwrap();
        assert_eq!(y.shape(), x.shape());
        for (a, b) in x.data().iter().zip(y.data()) {
            assert!((a - b).abs() < 1e-5);
        }
        assert_eq!(y, g.apply(&x, &style()).unwrap());
    }

    #[test]
    fn output_stays_in_open_interval_over_10k_calls() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut g = Generator::new(5);
        for t in g.params.tensors_mut() {
            for v in t.data_mut() {
                *v *= 4.0;
            }
        }
        let len = BANDS * 8 * 8;
        for call in 0..10_000 {
            let x: Vec<f32> = (0..len)
                .map(|_| match rng.random_range(0..10) {
                    0 => -1.0,
                    1 => 1.0,
                    _ => rng.random_range(-1.0f32..=1.0),
                })
                .collect();
            let st = DomainStyle {
                mean: (0..BANDS).map(|_| rng.random_range(-1.0..1.0)).collect(),
                std: (0..BANDS).map(|_| rng.random_range(0.0..1.0)).collect(),
            };
            let y = g.apply(&Tensor::new(&[1, BANDS, 8, 8], x).unwrap(), &st).unwrap();
            assert!(y.data().iter().all(|v| v.abs() < 1.0), "call {call}");
        }
    }

    #[test]
    fn bottleneck_carries_injected_statistics() {
        let g = Generator::new(7);
        let x = batch(1, 64, 4);
        let (pre, post) = g.bottleneck(&x, &style()).unwrap();
        let (mu, sigma) = g.injected_style(&style()).unwrap();
        let (_, pre_sigma) = instance_stats(&pre).unwrap();
        let plane = 8 * 8;
        for c in 0..BOTTLENECK {
            let (m, var) = plane_moments(&post.data()[c * plane..(c + 1) * plane]);
            let want_mu = mu.data()[c] as f64;
            assert!((m - want_mu).abs() <= 1e-4 * (1.0 + want_mu.abs()), "{c}");
            // Normalization divides by sqrt(var + eps), so the plain std is
            // sigma * sqrt(var / (var + eps)).
            let s = pre_sigma.data()[c] as f64;
            let eps = crate::numerics::INSTANCE_EPS as f64;
            let want = sigma.data()[c] as f64 * (1.0 - eps / (s * s)).max(0.0).sqrt();
            assert!((var.sqrt() - want).abs() <= 1e-4 * (1.0 + want), "{c}");
        }
    }

    #[test]
    fn discriminator_scores_are_probabilities() {
        let d = Discriminator::new(1);
        let s = d.score(&batch(3, 64, 9)).unwrap();
        assert_eq!(s.shape(), &[3, 1, 4, 4]);
        assert!(s.data().iter().all(|&v| v > 0.0 && v < 1.0));
    }

    #[test]
    fn layouts_are_checked() {
        let g = Generator::new(0);
        assert!(Generator::from_params(g.params.clone()).is_ok());
        assert!(Discriminator::from_params(g.params).is_err());
    }

    #[test]
    fn wrong_input_shape_is_rejected() {
        let g = Generator::new(0);
        assert!(g.apply(&Tensor::zeros(&[1, 6, 12, 12]), &style()).is_err());
        let odd = DomainStyle {
            mean: vec![0.0; 3],
            std: vec![0.1; 3],
        };
        assert!(g.apply(&Tensor::zeros(&[1, 6, 16, 16]), &odd).is_err());
    }
}
