//! Double-precision re-evaluation of a recorded tape.
//!
//! Piecewise-linear activations keep the sign pattern of the unperturbed
//! evaluation, so the replayed function is smooth in every leaf.

use super::kernels::ConvGeom;
use super::tape::{Activation, Op, Tape, Target, Var, INSTANCE_EPS, LEAKY_SLOPE, PROB_EPS};
use crate::error::{Error, Result};

pub(crate) struct Replay<'t> {
    tape: &'t Tape,
    out: usize,
    base: Vec<Vec<f64>>,
    kinks: Vec<Option<Vec<bool>>>,
}

impl<'t> Replay<'t> {
    /// Evaluate every node up to `out` at the recorded leaf values.
    pub fn new(tape: &'t Tape, out: Var) -> Result<Self> {
        let out = out.id();
        let mut r = Replay {
            tape,
            out,
            base: Vec::with_capacity(out + 1),
            kinks: vec![None; out + 1],
        };
        for id in 0..=out {
            let node = &tape.nodes[id];
            let v = match &node.op {
                Op::Input | Op::Param => node.value.data().iter().map(|&x| x as f64).collect(),
                Op::Act { x, kind: kind @ (Activation::Relu | Activation::LeakyRelu) } => {
                    let src = &r.base[x.id()];
                    r.kinks[id] = Some(src.iter().map(|&v| v > 0.0).collect());
                    piecewise(src, r.kinks[id].as_deref().unwrap(), *kind)
                }
                op => r.eval_op(id, op, |i| &r.base[i])?,
            };
            r.base.push(v);
        }
        Ok(r)
    }

    #[cfg(test)]
    pub fn output(&self) -> &[f64] {
        &self.base[self.out]
    }

    /// Output with element `index` of leaf `leaf` set to `value`; only nodes
    /// downstream of the leaf are recomputed.
    pub fn perturbed(&self, leaf: Var, index: usize, value: f64) -> Result<Vec<f64>> {
        let start = leaf.id();
        if start > self.out || !matches!(self.tape.nodes[start].op, Op::Input | Op::Param) {
            return Err(Error::InvalidArgument(format!("node {start} is not a leaf of the replay")));
        }
        let mut fresh: Vec<Option<Vec<f64>>> = vec![None; self.out + 1];
        let mut leafv = self.base[start].clone();
        leafv[index] = value;
        fresh[start] = Some(leafv);
        for id in start + 1..=self.out {
            let op = &self.tape.nodes[id].op;
            if !inputs(op).iter().any(|v| fresh[v.id()].is_some()) {
                continue;
            }
            let get = |i: usize| fresh[i].as_ref().unwrap_or(&self.base[i]);
            let v = match (op, &self.kinks[id]) {
                (Op::Act { x, kind }, Some(k)) => piecewise(get(x.id()), k, *kind),
                _ => self.eval_op(id, op, get)?,
            };
            fresh[id] = Some(v);
        }
        Ok(fresh[self.out].take().unwrap_or_else(|| self.base[self.out].clone()))
    }

    fn shape(&self, v: Var) -> &[usize] {
        self.tape.nodes[v.id()].value.shape()
    }

    fn eval_op<'a>(&'a self, id: usize, op: &Op, get: impl Fn(usize) -> &'a Vec<f64>) -> Result<Vec<f64>> {
        Ok(match op {
            Op::Input | Op::Param => unreachable!("leaves are not evaluated"),
            Op::Conv2d { x, w, b, geom } => conv2d(get(x.id()), get(w.id()), get(b.id()), geom),
            Op::Upsample2x { x } => {
                let s = self.shape(*x);
                upsample2x(get(x.id()), s[0] * s[1], s[2], s[3])
            }
            Op::Act { x, kind } => get(x.id()).iter().map(|&v| smooth(v, *kind)).collect(),
            Op::Add { a, b } => get(a.id()).iter().zip(get(b.id())).map(|(p, q)| p + q).collect(),
            Op::Linear { x, w, b } => {
                let (xs, ws, bs) = (get(x.id()), get(w.id()), get(b.id()));
                let fin = self.shape(*x)[1];
                let fout = bs.len();
                let mut out = Vec::with_capacity(xs.len() / fin * fout);
                for xi in xs.chunks_exact(fin) {
                    for (o, wo) in ws.chunks_exact(fin).enumerate() {
                        out.push(bs[o] + xi.iter().zip(wo).map(|(p, q)| p * q).sum::<f64>());
                    }
                }
                out
            }
            Op::Exp { x } => get(x.id()).iter().map(|v| v.exp()).collect(),
            Op::AdaIn { content, mu, sigma, .. } => {
                let s = self.shape(*content);
                let hw = s[2] * s[3];
                let (m, sg) = (get(mu.id()), get(sigma.id()));
                let mut out = Vec::with_capacity(get(content.id()).len());
                for (p, plane) in get(content.id()).chunks_exact(hw).enumerate() {
                    let mean = plane.iter().sum::<f64>() / hw as f64;
                    let var = plane.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / hw as f64;
                    let istd = 1.0 / (var + INSTANCE_EPS as f64).sqrt();
                    out.extend(plane.iter().map(|v| sg[p] * (v - mean) * istd + m[p]));
                }
                out
            }
            Op::SoftmaxXent { logits, targets, ignore, counted, .. } => {
                let s = self.shape(*logits);
                let (k, hw) = (s[1], s[2] * s[3]);
                let l = get(logits.id());
                let mut total = 0.0;
                for (i, &t) in targets.iter().enumerate() {
                    if t == *ignore {
                        continue;
                    }
                    let (n, px) = (i / hw, i % hw);
                    let at = |c: usize| l[n * k * hw + c * hw + px];
                    let max = (0..k).map(at).fold(f64::NEG_INFINITY, f64::max);
                    let z: f64 = (0..k).map(|c| (at(c) - max).exp()).sum();
                    total += z.ln() - (at(t as usize) - max);
                }
                vec![total / *counted as f64]
            }
            Op::LogLoss { p, target } => {
                let v = get(p.id());
                let total: f64 = v
                    .iter()
                    .map(|&q| {
                        let q = q.clamp(PROB_EPS, 1.0 - PROB_EPS);
                        match target {
                            Target::Real => -q.ln(),
                            Target::Fake => -(1.0 - q).ln(),
                        }
                    })
                    .sum();
                vec![total / v.len() as f64]
            }
            Op::WeightedSum { x, weights } => {
                vec![get(x.id()).iter().zip(weights).map(|(a, &w)| a * w as f64).sum()]
            }
        })
        .and_then(|v| {
            if v.iter().all(|x| x.is_finite()) {
                Ok(v)
            } else {
                Err(Error::NonFinite(format!("replayed node {id}")))
            }
        })
    }
}

fn inputs(op: &Op) -> Vec<Var> {
    match op {
        Op::Input | Op::Param => vec![],
        Op::Conv2d { x, w, b, .. } | Op::Linear { x, w, b } => vec![*x, *w, *b],
        Op::Upsample2x { x } | Op::Act { x, .. } | Op::Exp { x } | Op::WeightedSum { x, .. } => vec![*x],
        Op::Add { a, b } => vec![*a, *b],
        Op::AdaIn { content, mu, sigma, .. } => vec![*content, *mu, *sigma],
        Op::SoftmaxXent { logits, .. } => vec![*logits],
        Op::LogLoss { p, .. } => vec![*p],
    }
}

fn smooth(x: f64, kind: Activation) -> f64 {
    match kind {
        Activation::Relu => x.max(0.0),
        Activation::LeakyRelu => {
            if x > 0.0 {
                x
            } else {
                LEAKY_SLOPE as f64 * x
            }
        }
        Activation::Sigmoid => 1.0 / (1.0 + (-x).exp()),
        Activation::Tanh => x.tanh(),
    }
}

fn piecewise(x: &[f64], positive: &[bool], kind: Activation) -> Vec<f64> {
    let slope = if kind == Activation::Relu { 0.0 } else { LEAKY_SLOPE as f64 };
    x.iter()
        .zip(positive)
        .map(|(&v, &p)| if p { v } else { slope * v })
        .collect()
}

fn conv2d(x: &[f64], w: &[f64], b: &[f64], g: &ConvGeom) -> Vec<f64> {
    let (hw_in, hw_out) = (g.h * g.w, g.ho * g.wo);
    let mut out = vec![0.0; g.n * g.cout * hw_out];
    for n in 0..g.n {
        for co in 0..g.cout {
            let dst = &mut out[(n * g.cout + co) * hw_out..][..hw_out];
            dst.iter_mut().for_each(|d| *d = b[co]);
            for ci in 0..g.cin {
                let src = &x[(n * g.cin + ci) * hw_in..][..hw_in];
                for ky in 0..g.kh {
                    for kx in 0..g.kw {
                        let wv = w[((co * g.cin + ci) * g.kh + ky) * g.kw + kx];
                        for oy in 0..g.ho {
                            let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                            if iy < 0 || iy >= g.h as isize {
                                continue;
                            }
                            let row = &src[iy as usize * g.w..][..g.w];
                            for ox in 0..g.wo {
                                let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                                if ix >= 0 && ix < g.w as isize {
                                    dst[oy * g.wo + ox] += wv * row[ix as usize];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

fn upsample2x(x: &[f64], planes: usize, h: usize, w: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(planes * 4 * h * w);
    for p in 0..planes {
        for y in 0..2 * h {
            out.extend((0..2 * w).map(|xo| x[p * h * w + (y / 2) * w + xo / 2]));
        }
    }
    out
}
