//! Raw slice kernels behind the tape operations.
//!
//! Convolution lowers to im2col + GEMM per batch sample. Samples run in
//! parallel; per-sample weight gradients are reduced in sample order so the
//! result does not depend on the thread count.

use rayon::prelude::*;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct ConvGeom {
    pub n: usize,
    pub cin: usize,
    pub h: usize,
    pub w: usize,
    pub cout: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub pad: usize,
    pub ho: usize,
    pub wo: usize,
}

impl ConvGeom {
    pub fn patch_len(&self) -> usize {
        self.cin * self.kh * self.kw
    }

    pub fn out_pixels(&self) -> usize {
        self.ho * self.wo
    }

    fn is_pointwise(&self) -> bool {
        self.kh == 1 && self.kw == 1 && self.stride == 1 && self.pad == 0
    }
}

/// Row-major `c = a·b + beta·c` with explicit strides for `a` and `b`.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f32],
    (rsa, csa): (usize, usize),
    b: &[f32],
    (rsb, csb): (usize, usize),
    beta: f32,
    c: &mut [f32],
) {
    if m == 0 || n == 0 {
        return;
    }
    assert!(k == 0 || (m - 1) * rsa + (k - 1) * csa < a.len());
    assert!(k == 0 || (k - 1) * rsb + (n - 1) * csb < b.len());
    assert!(c.len() >= m * n);
    // SAFETY: the asserts above bound every index the kernel touches.
    unsafe {
        matrixmultiply::sgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

fn im2col(x: &[f32], g: &ConvGeom, cols: &mut [f32]) {
    let (h, w, ho, wo) = (g.h as isize, g.w as isize, g.ho, g.wo);
    let (s, p) = (g.stride as isize, g.pad as isize);
    let mut row = 0;
    for ci in 0..g.cin {
        let plane = &x[ci * g.h * g.w..(ci + 1) * g.h * g.w];
        for ky in 0..g.kh as isize {
            for kx in 0..g.kw as isize {
                let dst = &mut cols[row * ho * wo..(row + 1) * ho * wo];
                for oy in 0..ho {
                    let iy = oy as isize * s + ky - p;
                    let out_row = &mut dst[oy * wo..(oy + 1) * wo];
                    if iy < 0 || iy >= h {
                        out_row.fill(0.0);
                        continue;
                    }
                    let src = &plane[(iy * w) as usize..((iy + 1) * w) as usize];
                    for (ox, o) in out_row.iter_mut().enumerate() {
                        let ix = ox as isize * s + kx - p;
                        *o = if ix < 0 || ix >= w { 0.0 } else { src[ix as usize] };
                    }
                }
                row += 1;
            }
        }
    }
}

fn col2im(cols: &[f32], g: &ConvGeom, dx: &mut [f32]) {
    let (h, w, ho, wo) = (g.h as isize, g.w as isize, g.ho, g.wo);
    let (s, p) = (g.stride as isize, g.pad as isize);
    let mut row = 0;
    for ci in 0..g.cin {
        let plane = &mut dx[ci * g.h * g.w..(ci + 1) * g.h * g.w];
        for ky in 0..g.kh as isize {
            for kx in 0..g.kw as isize {
                let src = &cols[row * ho * wo..(row + 1) * ho * wo];
                for oy in 0..ho {
                    let iy = oy as isize * s + ky - p;
                    if iy < 0 || iy >= h {
                        continue;
                    }
                    let dst = &mut plane[(iy * w) as usize..((iy + 1) * w) as usize];
                    for ox in 0..wo {
                        let ix = ox as isize * s + kx - p;
                        if ix >= 0 && ix < w {
                            dst[ix as usize] += src[oy * wo + ox];
                        }
                    }
                }
                row += 1;
            }
        }
    }
}

pub(crate) fn conv2d_forward(x: &[f32], weight: &[f32], bias: &[f32], g: &ConvGeom) -> Vec<f32> {
    let in_per = g.cin * g.h * g.w;
    let out_per = g.cout * g.out_pixels();
    let mut out = vec![0.0f32; g.n * out_per];
    out.par_chunks_mut(out_per)
        .enumerate()
        .for_each(|(i, y)| {
            let xs = &x[i * in_per..(i + 1) * in_per];
            for (co, row) in y.chunks_mut(g.out_pixels()).enumerate() {
                row.fill(bias[co]);
            }
            let k = g.patch_len();
            if g.is_pointwise() {
                gemm(g.cout, k, g.out_pixels(), weight, (k, 1), xs, (g.out_pixels(), 1), 1.0, y);
            } else {
                let mut cols = vec![0.0f32; k * g.out_pixels()];
                im2col(xs, g, &mut cols);
                gemm(g.cout, k, g.out_pixels(), weight, (k, 1), &cols, (g.out_pixels(), 1), 1.0, y);
            }
        });
    out
}

pub(crate) struct ConvGrads {
    pub dx: Option<Vec<f32>>,
    pub dw: Vec<f32>,
    pub db: Vec<f32>,
}

pub(crate) fn conv2d_backward(
    x: &[f32],
    weight: &[f32],
    dy: &[f32],
    g: &ConvGeom,
    need_dx: bool,
) -> ConvGrads {
    let in_per = g.cin * g.h * g.w;
    let out_per = g.cout * g.out_pixels();
    let k = g.patch_len();
    let hw = g.out_pixels();

    let per_sample: Vec<(Option<Vec<f32>>, Vec<f32>)> = (0..g.n)
        .into_par_iter()
        .map(|i| {
            let xs = &x[i * in_per..(i + 1) * in_per];
            let dys = &dy[i * out_per..(i + 1) * out_per];
            let owned;
            let cols: &[f32] = if g.is_pointwise() {
                xs
            } else {
                let mut c = vec![0.0f32; k * hw];
                im2col(xs, g, &mut c);
                owned = c;
                &owned
            };
            let mut dw = vec![0.0f32; g.cout * k];
            gemm(g.cout, hw, k, dys, (hw, 1), cols, (1, hw), 0.0, &mut dw);
            let dx = need_dx.then(|| {
                let mut dcols = vec![0.0f32; k * hw];
                gemm(k, g.cout, hw, weight, (1, k), dys, (hw, 1), 0.0, &mut dcols);
                if g.is_pointwise() {
                    dcols
                } else {
                    let mut dx = vec![0.0f32; in_per];
                    col2im(&dcols, g, &mut dx);
                    dx
                }
            });
            (dx, dw)
        })
        .collect();

    let mut dw = vec![0.0f32; g.cout * k];
    let mut dx = need_dx.then(|| Vec::with_capacity(g.n * in_per));
    for (sdx, sdw) in per_sample {
        for (a, b) in dw.iter_mut().zip(&sdw) {
            *a += b;
        }
        if let (Some(all), Some(part)) = (dx.as_mut(), sdx) {
            all.extend_from_slice(&part);
        }
    }

    let mut db = vec![0.0f32; g.cout];
    for i in 0..g.n {
        for (co, d) in db.iter_mut().enumerate() {
            let start = i * out_per + co * hw;
            *d += dy[start..start + hw].iter().sum::<f32>();
        }
    }
    ConvGrads { dx, dw, db }
}

pub(crate) fn upsample2x_forward(x: &[f32], planes: usize, h: usize, w: usize) -> Vec<f32> {
    let (h2, w2) = (2 * h, 2 * w);
    let mut out = vec![0.0f32; planes * h2 * w2];
    for p in 0..planes {
        let src = &x[p * h * w..(p + 1) * h * w];
        let dst = &mut out[p * h2 * w2..(p + 1) * h2 * w2];
        for y in 0..h2 {
            let srow = &src[(y / 2) * w..(y / 2 + 1) * w];
            let drow = &mut dst[y * w2..(y + 1) * w2];
            for (xo, d) in drow.iter_mut().enumerate() {
                *d = srow[xo / 2];
            }
        }
    }
    out
}

pub(crate) fn upsample2x_backward(dy: &[f32], planes: usize, h: usize, w: usize) -> Vec<f32> {
    let (h2, w2) = (2 * h, 2 * w);
    let mut dx = vec![0.0f32; planes * h * w];
    for p in 0..planes {
        let src = &dy[p * h2 * w2..(p + 1) * h2 * w2];
        let dst = &mut dx[p * h * w..(p + 1) * h * w];
        for y in 0..h2 {
            for x in 0..w2 {
                dst[(y / 2) * w + x / 2] += src[y * w2 + x];
            }
        }
    }
    dx
}
