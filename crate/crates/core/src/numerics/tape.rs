//! Reverse-mode differentiation over a linear tape of layer-level operations.
//!
//! Nodes are appended in execution order, so node ids are already a
//! topological order. `backward` walks them once in reverse.

use super::kernels::{self, ConvGeom};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn id(self) -> usize {
        self.0
    }
}

pub const LEAKY_SLOPE: f32 = 0.2;

/// Instance-statistics stabilizer, added to the variance under the square root.
pub const INSTANCE_EPS: f32 = 1e-5;

/// Largest `f32` below one; tanh outputs stay in the open interval.
const TANH_BOUND: f32 = 1.0 - f32::EPSILON / 2.0;

/// Probability clamp used by the adversarial log-losses.
pub(crate) const PROB_EPS: f64 = 1e-7;

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Activation {
    Relu,
    /// Leaky ReLU with negative slope 0.2.
    LeakyRelu,
    Sigmoid,
    Tanh,
}

impl Activation {
    pub fn apply(self, x: f32) -> f32 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::LeakyRelu => {
                if x > 0.0 {
                    x
                } else {
                    LEAKY_SLOPE * x
                }
            }
            Activation::Sigmoid => {
                if x >= 0.0 {
                    1.0 / (1.0 + (-x).exp())
                } else {
                    let e = x.exp();
                    e / (1.0 + e)
                }
            }
            Activation::Tanh => x.tanh().clamp(-TANH_BOUND, TANH_BOUND),
        }
    }

    /// Derivative expressed through the forward output `y`.
    fn grad_from_output(self, y: f32) -> f32 {
        match self {
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::LeakyRelu => {
                if y > 0.0 {
                    1.0
                } else {
                    LEAKY_SLOPE
                }
            }
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Tanh => 1.0 - y * y,
        }
    }
}

/// Which side of the adversarial objective a probability map is scored against.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Target {
    /// `−mean log p`
    Real,
    /// `−mean log(1 − p)`
    Fake,
}

pub(super) enum Op {
    Input,
    Param,
    Conv2d {
        x: Var,
        w: Var,
        b: Var,
        geom: ConvGeom,
    },
    Upsample2x {
        x: Var,
    },
    Act {
        x: Var,
        kind: Activation,
    },
    Add {
        a: Var,
        b: Var,
    },
    Linear {
        x: Var,
        w: Var,
        b: Var,
    },
    Exp {
        x: Var,
    },
    AdaIn {
        content: Var,
        mu: Var,
        sigma: Var,
        normalized: Vec<f64>,
        inv_std: Vec<f64>,
    },
    SoftmaxXent {
        logits: Var,
        probs: Vec<f32>,
        targets: Vec<u8>,
        ignore: u8,
        counted: usize,
    },
    LogLoss {
        p: Var,
        target: Target,
    },
    WeightedSum {
        x: Var,
        weights: Vec<f32>,
    },
}

pub(super) struct Node {
    pub(super) value: Tensor,
    pub(super) op: Op,
    needs_grad: bool,
}

/// Record of performed operations; owns every intermediate value.
#[derive(Default)]
pub struct Tape {
    pub(super) nodes: Vec<Node>,
}

/// Gradients of a scalar loss with respect to the parameter leaves of a tape.
pub struct Grads {
    grads: Vec<Option<Tensor>>,
    shapes: Vec<Vec<usize>>,
}

impl Grads {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    /// Gradient for `v`, or zeros of the node's shape when the loss does not reach it.
    pub fn wrt(&self, v: Var) -> Tensor {
        self.get(v)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(&self.shapes[v.0]))
    }

    pub fn collect(&self, vars: &[Var]) -> Vec<Tensor> {
        vars.iter().map(|&v| self.wrt(v)).collect()
    }
}

fn shape_err(msg: String) -> Error {
    Error::Shape(msg)
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        debug_assert!(value.is_finite(), "non-finite forward value");
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn ng(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// Constant leaf; no gradient is propagated into it.
    pub fn input(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Input, false)
    }

    /// Trainable leaf; its gradient is reported by [`Tape::backward`].
    pub fn param(&mut self, t: &Tensor) -> Var {
        self.push(t.clone(), Op::Param, true)
    }

    pub fn params<'a>(&mut self, ts: impl IntoIterator<Item = &'a Tensor>) -> Vec<Var> {
        ts.into_iter().map(|t| self.param(t)).collect()
    }

    /// 2-D cross-correlation. `w` is `[Cout, Cin, kH, kW]`, `b` is `[Cout]`.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Var, stride: usize, pad: usize) -> Result<Var> {
        let (n, cin, h, wd) = self.value(x).dims4()?;
        let (cout, wcin, kh, kw) = self.value(w).dims4()?;
        if wcin != cin {
            return Err(shape_err(format!(
                "conv2d: input has {cin} channels, weights expect {wcin}"
            )));
        }
        if self.value(b).len() != cout {
            return Err(shape_err(format!(
                "conv2d: bias has {} entries, expected {cout}",
                self.value(b).len()
            )));
        }
        if stride == 0 {
            return Err(Error::InvalidArgument("conv2d: stride must be ≥ 1".into()));
        }
        if h + 2 * pad < kh || wd + 2 * pad < kw {
            return Err(shape_err(format!(
                "conv2d: kernel {kh}x{kw} larger than padded input {h}x{wd}"
            )));
        }
        let geom = ConvGeom {
            n,
            cin,
            h,
            w: wd,
            cout,
            kh,
            kw,
            stride,
            pad,
            ho: (h + 2 * pad - kh) / stride + 1,
            wo: (wd + 2 * pad - kw) / stride + 1,
        };
        let out = kernels::conv2d_forward(
            self.value(x).data(),
            self.value(w).data(),
            self.value(b).data(),
            &geom,
        );
        let value = Tensor::new(&[n, cout, geom.ho, geom.wo], out)?;
        let ng = self.ng(x) || self.ng(w) || self.ng(b);
        Ok(self.push(value, Op::Conv2d { x, w, b, geom }, ng))
    }

    /// Nearest-neighbour 2× spatial upsampling.
    pub fn upsample2x(&mut self, x: Var) -> Result<Var> {
        let (n, c, h, w) = self.value(x).dims4()?;
        let out = kernels::upsample2x_forward(self.value(x).data(), n * c, h, w);
        let value = Tensor::new(&[n, c, 2 * h, 2 * w], out)?;
        let ng = self.ng(x);
        Ok(self.push(value, Op::Upsample2x { x }, ng))
    }

    pub fn activation(&mut self, x: Var, kind: Activation) -> Var {
        let src = self.value(x);
        let data = src.data().iter().map(|&v| kind.apply(v)).collect();
        let value = Tensor::new(src.shape(), data).expect("same shape");
        let ng = self.ng(x);
        self.push(value, Op::Act { x, kind }, ng)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(shape_err(format!(
                "add: {:?} vs {:?}",
                va.shape(),
                vb.shape()
            )));
        }
        let data = va.data().iter().zip(vb.data()).map(|(x, y)| x + y).collect();
        let value = Tensor::new(va.shape(), data)?;
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(value, Op::Add { a, b }, ng))
    }

    /// `y = x·wᵀ + b` for `x: [N, in]`, `w: [out, in]`, `b: [out]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (vx, vw, vb) = (self.value(x), self.value(w), self.value(b));
        let (n, fin) = match vx.shape() {
            [n, f] => (*n, *f),
            s => return Err(shape_err(format!("linear: input must be [N, in], got {s:?}"))),
        };
        let fout = match vw.shape() {
            [o, i] if *i == fin => *o,
            s => {
                return Err(shape_err(format!(
                    "linear: weights {s:?} incompatible with {fin} inputs"
                )))
            }
        };
        if vb.len() != fout {
            return Err(shape_err(format!("linear: bias must have {fout} entries")));
        }
        let mut out = vec![0.0f32; n * fout];
        for i in 0..n {
            let xi = &vx.data()[i * fin..(i + 1) * fin];
            for o in 0..fout {
                let wo = &vw.data()[o * fin..(o + 1) * fin];
                out[i * fout + o] =
                    vb.data()[o] + xi.iter().zip(wo).map(|(a, b)| a * b).sum::<f32>();
            }
        }
        let value = Tensor::new(&[n, fout], out)?;
        let ng = self.ng(x) || self.ng(w) || self.ng(b);
        Ok(self.push(value, Op::Linear { x, w, b }, ng))
    }

    pub fn exp(&mut self, x: Var) -> Var {
        let src = self.value(x);
        let data = src.data().iter().map(|v| v.exp()).collect();
        let value = Tensor::new(src.shape(), data).expect("same shape");
        let ng = self.ng(x);
        self.push(value, Op::Exp { x }, ng)
    }

    /// Adaptive instance normalization: each `(sample, channel)` plane of
    /// `content` is standardized with its own statistics, then scaled by
    /// `sigma` and shifted by `mu` (both `[N, C]`).
    pub fn adain(&mut self, content: Var, mu: Var, sigma: Var) -> Result<Var> {
        let (n, c, h, w) = self.value(content).dims4()?;
        for (name, v) in [("mu", mu), ("sigma", sigma)] {
            if self.value(v).shape() != [n, c] {
                return Err(shape_err(format!(
                    "adain: {name} must be [{n}, {c}], got {:?}",
                    self.value(v).shape()
                )));
            }
        }
        let hw = h * w;
        let x = self.value(content).data();
        let (m, s) = (self.value(mu).data(), self.value(sigma).data());
        let mut normalized = vec![0.0f64; x.len()];
        let mut inv_std = vec![0.0f64; n * c];
        let mut out = vec![0.0f32; x.len()];
        for p in 0..n * c {
            let plane = &x[p * hw..(p + 1) * hw];
            let (mean, var) = plane_moments(plane);
            let istd = 1.0 / (var + INSTANCE_EPS as f64).sqrt();
            inv_std[p] = istd;
            for i in 0..hw {
                let xh = (plane[i] as f64 - mean) * istd;
                normalized[p * hw + i] = xh;
                out[p * hw + i] = (s[p] as f64 * xh + m[p] as f64) as f32;
            }
        }
        let value = Tensor::new(&[n, c, h, w], out)?;
        let ng = self.ng(content) || self.ng(mu) || self.ng(sigma);
        Ok(self.push(
            value,
            Op::AdaIn {
                content,
                mu,
                sigma,
                normalized,
                inv_std,
            },
            ng,
        ))
    }

    /// Mean per-pixel softmax cross-entropy of `logits: [N, K, H, W]` against
    /// class indices `targets` (length `N·H·W`). Pixels equal to `ignore` do
    /// not contribute.
    pub fn softmax_xent(&mut self, logits: Var, targets: &[u8], ignore: u8) -> Result<Var> {
        let (n, k, h, w) = self.value(logits).dims4()?;
        let hw = h * w;
        if targets.len() != n * hw {
            return Err(shape_err(format!(
                "softmax_xent: {} targets for {} pixels",
                targets.len(),
                n * hw
            )));
        }
        let l = self.value(logits).data();
        let mut probs = vec![0.0f32; l.len()];
        let mut total = 0.0f64;
        let mut counted = 0usize;
        for i in 0..n {
            for px in 0..hw {
                let at = |c: usize| i * k * hw + c * hw + px;
                let max = (0..k).map(|c| l[at(c)]).fold(f32::NEG_INFINITY, f32::max);
                let z: f64 = (0..k).map(|c| ((l[at(c)] - max) as f64).exp()).sum();
                for c in 0..k {
                    probs[at(c)] = (((l[at(c)] - max) as f64).exp() / z) as f32;
                }
                let t = targets[i * hw + px];
                if t == ignore {
                    continue;
                }
                if t as usize >= k {
                    return Err(Error::Range(format!(
                        "softmax_xent: target {t} outside [0, {k})"
                    )));
                }
                total += z.ln() - (l[at(t as usize)] - max) as f64;
                counted += 1;
            }
        }
        if counted == 0 {
            return Err(Error::Empty("softmax_xent: every pixel is ignored".into()));
        }
        let value = Tensor::scalar((total / counted as f64) as f32);
        let ng = self.ng(logits);
        Ok(self.push(
            value,
            Op::SoftmaxXent {
                logits,
                probs,
                targets: targets.to_vec(),
                ignore,
                counted,
            },
            ng,
        ))
    }

    /// Adversarial log-loss of a probability map (see [`Target`]).
    pub fn log_loss(&mut self, p: Var, target: Target) -> Result<Var> {
        let v = self.value(p);
        if !v.is_finite() {
            return Err(Error::NonFinite("log_loss input".into()));
        }
        let n = v.len() as f64;
        let total: f64 = v
            .data()
            .iter()
            .map(|&q| {
                let q = (q as f64).clamp(PROB_EPS, 1.0 - PROB_EPS);
                match target {
                    Target::Real => -q.ln(),
                    Target::Fake => -(1.0 - q).ln(),
                }
            })
            .sum();
        let ng = self.ng(p);
        Ok(self.push(
            Tensor::scalar((total / n) as f32),
            Op::LogLoss { p, target },
            ng,
        ))
    }

    /// `Σ weights[i]·x[i]` as a scalar node.
    pub fn weighted_sum(&mut self, x: Var, weights: Vec<f32>) -> Result<Var> {
        let v = self.value(x);
        if v.len() != weights.len() {
            return Err(shape_err(format!(
                "weighted_sum: {} weights for {} values",
                weights.len(),
                v.len()
            )));
        }
        let s: f64 = v
            .data()
            .iter()
            .zip(&weights)
            .map(|(a, b)| *a as f64 * *b as f64)
            .sum();
        let ng = self.ng(x);
        Ok(self.push(Tensor::scalar(s as f32), Op::WeightedSum { x, weights }, ng))
    }

    /// Gradients of the scalar node `loss` with respect to every parameter leaf.
    pub fn backward(&self, loss: Var) -> Result<Grads> {
        if self.value(loss).len() != 1 {
            return Err(shape_err(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        let mut acc: Vec<Option<Vec<f32>>> = vec![None; self.nodes.len()];
        acc[loss.0] = Some(vec![1.0]);
        let mut out: Vec<Option<Tensor>> = vec![None; self.nodes.len()];

        for id in (0..=loss.0).rev() {
            let Some(g) = acc[id].take() else { continue };
            let node = &self.nodes[id];
            if !node.needs_grad {
                continue;
            }
            match &node.op {
                Op::Input => {}
                Op::Param => {
                    out[id] = Some(Tensor::new(node.value.shape(), g)?);
                }
                Op::Conv2d { x, w, b, geom } => {
                    let cg = kernels::conv2d_backward(
                        self.value(*x).data(),
                        self.value(*w).data(),
                        &g,
                        geom,
                        self.ng(*x),
                    );
                    if let Some(dx) = cg.dx {
                        self.accumulate(&mut acc, *x, dx);
                    }
                    self.accumulate(&mut acc, *w, cg.dw);
                    self.accumulate(&mut acc, *b, cg.db);
                }
                Op::Upsample2x { x } => {
                    let (n, c, h, w) = self.value(*x).dims4()?;
                    let dx = kernels::upsample2x_backward(&g, n * c, h, w);
                    self.accumulate(&mut acc, *x, dx);
                }
                Op::Act { x, kind } => {
                    let dx = g
                        .iter()
                        .zip(node.value.data())
                        .map(|(gi, &y)| gi * kind.grad_from_output(y))
                        .collect();
                    self.accumulate(&mut acc, *x, dx);
                }
                Op::Add { a, b } => {
                    self.accumulate(&mut acc, *a, g.clone());
                    self.accumulate(&mut acc, *b, g);
                }
                Op::Linear { x, w, b } => {
                    let (vx, vw) = (self.value(*x), self.value(*w));
                    let (n, fin) = (vx.shape()[0], vx.shape()[1]);
                    let fout = vw.shape()[0];
                    if self.ng(*x) {
                        let mut dx = vec![0.0f32; n * fin];
                        for i in 0..n {
                            for o in 0..fout {
                                let go = g[i * fout + o];
                                for j in 0..fin {
                                    dx[i * fin + j] += go * vw.data()[o * fin + j];
                                }
                            }
                        }
                        self.accumulate(&mut acc, *x, dx);
                    }
                    let mut dw = vec![0.0f32; fout * fin];
                    let mut db = vec![0.0f32; fout];
                    for i in 0..n {
                        for o in 0..fout {
                            let go = g[i * fout + o];
                            db[o] += go;
                            for j in 0..fin {
                                dw[o * fin + j] += go * vx.data()[i * fin + j];
                            }
                        }
                    }
                    self.accumulate(&mut acc, *w, dw);
                    self.accumulate(&mut acc, *b, db);
                }
                Op::Exp { x } => {
                    let dx = g.iter().zip(node.value.data()).map(|(a, y)| a * y).collect();
                    self.accumulate(&mut acc, *x, dx);
                }
                Op::AdaIn {
                    content,
                    mu,
                    sigma,
                    normalized,
                    inv_std,
                } => {
                    let (n, c, h, w) = self.value(*content).dims4()?;
                    let hw = h * w;
                    let s = self.value(*sigma).data();
                    let mut dmu = vec![0.0f32; n * c];
                    let mut dsigma = vec![0.0f32; n * c];
                    let mut dx = vec![0.0f32; n * c * hw];
                    for p in 0..n * c {
                        let gp = &g[p * hw..(p + 1) * hw];
                        let xh = &normalized[p * hw..(p + 1) * hw];
                        let (mut sum_g, mut sum_gx) = (0.0f64, 0.0f64);
                        for i in 0..hw {
                            sum_g += gp[i] as f64;
                            sum_gx += gp[i] as f64 * xh[i];
                        }
                        dmu[p] = sum_g as f32;
                        dsigma[p] = sum_gx as f32;
                        // dxhat = g·σ; dx = (dxhat − mean(dxhat) − x̂·mean(dxhat·x̂)) / std
                        let sp = s[p] as f64;
                        let mean_d = sp * sum_g / hw as f64;
                        let mean_dx = sp * sum_gx / hw as f64;
                        let istd = inv_std[p];
                        for i in 0..hw {
                            let d = sp * gp[i] as f64;
                            dx[p * hw + i] = ((d - mean_d - xh[i] * mean_dx) * istd) as f32;
                        }
                    }
                    self.accumulate(&mut acc, *content, dx);
                    self.accumulate(&mut acc, *mu, dmu);
                    self.accumulate(&mut acc, *sigma, dsigma);
                }
                Op::SoftmaxXent {
                    logits,
                    probs,
                    targets,
                    ignore,
                    counted,
                } => {
                    let (n, k, h, w) = self.value(*logits).dims4()?;
                    let hw = h * w;
                    let scale = g[0] / *counted as f32;
                    let mut dl = vec![0.0f32; probs.len()];
                    for i in 0..n {
                        for px in 0..hw {
                            let t = targets[i * hw + px];
                            if t == *ignore {
                                continue;
                            }
                            for c in 0..k {
                                let at = i * k * hw + c * hw + px;
                                let onehot = if c == t as usize { 1.0 } else { 0.0 };
                                dl[at] = (probs[at] - onehot) * scale;
                            }
                        }
                    }
                    self.accumulate(&mut acc, *logits, dl);
                }
                Op::LogLoss { p, target } => {
                    let v = self.value(*p);
                    let n = v.len() as f64;
                    let g0 = g[0] as f64;
                    let dp = v
                        .data()
                        .iter()
                        .map(|&q| {
                            let raw = q as f64;
                            let qc = raw.clamp(PROB_EPS, 1.0 - PROB_EPS);
                            if qc != raw {
                                return 0.0;
                            }
                            let d = match target {
                                Target::Real => -1.0 / qc,
                                Target::Fake => 1.0 / (1.0 - qc),
                            };
                            (g0 * d / n) as f32
                        })
                        .collect();
                    self.accumulate(&mut acc, *p, dp);
                }
                Op::WeightedSum { x, weights } => {
                    let dx = weights.iter().map(|wi| wi * g[0]).collect();
                    self.accumulate(&mut acc, *x, dx);
                }
            }
        }

        Ok(Grads {
            grads: out,
            shapes: self.nodes.iter().map(|n| n.value.shape().to_vec()).collect(),
        })
    }

    fn accumulate(&self, acc: &mut [Option<Vec<f32>>], v: Var, g: Vec<f32>) {
        if !self.ng(v) {
            return;
        }
        match &mut acc[v.0] {
            Some(existing) => {
                for (a, b) in existing.iter_mut().zip(&g) {
                    *a += b;
                }
            }
            slot => *slot = Some(g),
        }
    }
}

/// Mean and population variance of one plane, accumulated in `f64`.
pub(crate) fn plane_moments(plane: &[f32]) -> (f64, f64) {
    let n = plane.len() as f64;
    let mean = plane.iter().map(|&v| v as f64).sum::<f64>() / n;
    let var = plane
        .iter()
        .map(|&v| {
            let d = v as f64 - mean;
            d * d
        })
        .sum::<f64>()
        / n;
    (mean, var)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_case_gradient_is_input() {
        let mut tape = Tape::new();
        let w = tape.param(&Tensor::new(&[3], vec![0.5, -1.0, 2.0]).unwrap());
        let x = vec![1.5, 2.5, -3.0];
        let loss = tape.weighted_sum(w, x.clone()).unwrap();
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.wrt(w).data(), &x[..]);
    }

    #[test]
    fn unreached_parameter_has_zero_gradient() {
        let mut tape = Tape::new();
        let used = tape.param(&Tensor::full(&[2], 1.0));
        let unused = tape.param(&Tensor::full(&[2], 3.0));
        let loss = tape.weighted_sum(used, vec![1.0, 1.0]).unwrap();
        let g = tape.backward(loss).unwrap();
        assert!(g.get(unused).is_none());
        assert_eq!(g.wrt(unused).data(), &[0.0, 0.0]);
    }

    #[test]
    fn constant_loss_has_zero_gradient() {
        let mut tape = Tape::new();
        let w = tape.param(&Tensor::full(&[2], 1.0));
        let c = tape.input(Tensor::full(&[2], 4.0));
        let loss = tape.weighted_sum(c, vec![1.0, 2.0]).unwrap();
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.wrt(w).data(), &[0.0, 0.0]);
    }

    #[test]
    fn non_scalar_loss_is_rejected() {
        let mut tape = Tape::new();
        let w = tape.param(&Tensor::full(&[2], 1.0));
        assert!(matches!(tape.backward(w), Err(Error::Shape(_))));
    }

    #[test]
    fn activations_match_reference_points() {
        assert_eq!(Activation::Relu.apply(-1.0), 0.0);
        assert_eq!(Activation::Sigmoid.apply(0.0), 0.5);
        assert!((Activation::LeakyRelu.apply(-2.0) + 0.4).abs() < 1e-7);
        let s = Activation::Sigmoid.apply(-30.0);
        assert!(s > 0.0 && s < 1.0);
    }

    #[test]
    fn shared_node_gradients_accumulate() {
        let mut tape = Tape::new();
        let w = tape.param(&Tensor::full(&[1], 3.0));
        let twice = tape.add(w, w).unwrap();
        let loss = tape.weighted_sum(twice, vec![1.0]).unwrap();
        assert_eq!(tape.backward(loss).unwrap().wrt(w).data(), &[2.0]);
    }
}
