use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::numerics::{Activation, ParamSet, Tape, Tensor, Var};

pub const INPUT_BANDS: usize = 6;
pub const NUM_CLASSES: usize = 8;
pub const CHECKPOINT_KIND: &str = "segmenter";

const ENCODER: [usize; 5] = [INPUT_BANDS, 32, 64, 128, 256];

/// Encoder-decoder segmenter.
///
/// Four stride-2 3×3 conv blocks (6→32→64→128→256) and four
/// upsample + 3×3 conv blocks (256→128→64→32→K). Each decoder block's output
/// is summed with the encoder activation of the same resolution, and a 1×1
/// per-pixel projection of the input is added to the logits.
#[derive(Clone, Debug, PartialEq)]
pub struct Segmenter {
    pub params: ParamSet,
    classes: usize,
}

impl Segmenter {
    pub fn new(classes: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = ParamSet::default();
        for i in 0..4 {
            let (cin, cout) = (ENCODER[i], ENCODER[i + 1]);
            p.push_uniform(&format!("enc{i}.w"), &[cout, cin, 3, 3], cin * 9, &mut rng);
            p.push_uniform(&format!("enc{i}.b"), &[cout], cin * 9, &mut rng);
        }
        for i in 0..4 {
            let cin = ENCODER[4 - i];
            let cout = if i == 3 { classes } else { ENCODER[3 - i] };
            p.push_uniform(&format!("dec{i}.w"), &[cout, cin, 3, 3], cin * 9, &mut rng);
            p.push_uniform(&format!("dec{i}.b"), &[cout], cin * 9, &mut rng);
        }
        p.push_uniform("pix.w", &[classes, INPUT_BANDS, 1, 1], INPUT_BANDS, &mut rng);
        p.push_uniform("pix.b", &[classes], INPUT_BANDS, &mut rng);
        Segmenter { params: p, classes }
    }

    pub fn from_params(params: ParamSet) -> Result<Self> {
        let classes = params
            .get("pix.b")
            .map(|t| t.len())
            .ok_or_else(|| crate::Error::Format("segmenter checkpoint lacks `pix.b`".into()))?;
        let template = Segmenter::new(classes, 0);
        let same = template.params.names() == params.names()
            && template
                .params
                .tensors()
                .iter()
                .zip(params.tensors())
                .all(|(a, b)| a.shape() == b.shape());
        if !same {
            return Err(crate::Error::Shape("segmenter parameter layout mismatch".into()));
        }
        Ok(Segmenter { params, classes })
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    /// Logits `[N, K, H, W]` for an input batch `[N, 6, H, W]`; H and W must be
    /// multiples of 16.
    pub fn forward(&self, tape: &mut Tape, p: &[Var], x: Var) -> Result<Var> {
        let mut skips = Vec::with_capacity(4);
        let mut h = x;
        for i in 0..4 {
            let c = tape.conv2d(h, p[2 * i], p[2 * i + 1], 2, 1)?;
            h = tape.activation(c, Activation::LeakyRelu);
            skips.push(h);
        }
        for i in 0..4 {
            let base = 8 + 2 * i;
            let up = tape.upsample2x(h)?;
            let c = tape.conv2d(up, p[base], p[base + 1], 1, 1)?;
            h = if i < 3 {
                let a = tape.activation(c, Activation::LeakyRelu);
                tape.add(a, skips[2 - i])?
            } else {
                c
            };
        }
        let pix = tape.conv2d(x, p[16], p[17], 1, 0)?;
        tape.add(h, pix)
    }

    /// Logits for a batch without recording gradients for later use.
    pub fn logits(&self, batch: &Tensor) -> Result<Tensor> {
        let mut tape = Tape::new();
        let vars = self.params.bind(&mut tape, false);
        let x = tape.input(batch.clone());
        let y = self.forward(&mut tape, &vars, x)?;
        Ok(tape.value(y).clone())
    }
}
