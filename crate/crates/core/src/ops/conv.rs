//! 2-D convolution and its transpose, lowered to im2col + GEMM per sample.
//!
//! Samples are processed independently and weight gradients are reduced in
//! sample order, so results do not depend on the rayon pool size.

use rayon::prelude::*;

use super::gemm::{gemm, Mat};
use crate::error::{Error, Result};
use crate::tensor::{Shape, Tensor};

/// Convolution weights `(Cout, Cin, k, k)` with bias, stride and zero padding.
///
/// For the transposed convolution the same layout is read as the adjoint:
/// `weights.n` is the input channel count, `weights.c` the output count, and
/// `bias` has one entry per output channel.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvParams {
    pub weights: Tensor,
    pub bias: Vec<f32>,
    pub stride: usize,
    pub padding: usize,
}

#[derive(Clone, Debug)]
pub struct ConvGrads {
    pub dx: Tensor,
    pub dw: Tensor,
    pub db: Vec<f32>,
}

impl ConvParams {
    pub fn new(weights: Tensor, bias: Vec<f32>, stride: usize, padding: usize) -> Self {
        ConvParams {
            weights,
            bias,
            stride,
            padding,
        }
    }

    pub fn kernel(&self) -> usize {
        self.weights.shape().h
    }

    pub fn out_channels(&self) -> usize {
        self.weights.shape().n
    }

    pub fn in_channels(&self) -> usize {
        self.weights.shape().c
    }

    fn validate(&self, ctx: &str, bias_len: usize) -> Result<()> {
        let ws = self.weights.shape();
        if ws.h != ws.w {
            return Err(Error::shape(ctx, "kernel width", ws.h, ws.w));
        }
        if ws.h == 0 {
            return Err(Error::InvalidArgument(format!("{ctx}: empty kernel")));
        }
        if self.stride == 0 {
            return Err(Error::InvalidArgument(format!(
                "{ctx}: stride must be positive"
            )));
        }
        if self.bias.len() != bias_len {
            return Err(Error::shape(ctx, "bias length", bias_len, self.bias.len()));
        }
        Ok(())
    }
}

/// Spatial geometry of a convolution from an `h x w` image.
#[derive(Clone, Copy, Debug)]
struct Geometry {
    channels: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    pad: usize,
    ho: usize,
    wo: usize,
}

impl Geometry {
    fn new(
        ctx: &str,
        channels: usize,
        h: usize,
        w: usize,
        k: usize,
        stride: usize,
        pad: usize,
    ) -> Result<Self> {
        let ho = conv_out_extent(h, k, stride, pad).ok_or_else(|| {
            Error::InvalidArgument(format!(
                "{ctx}: kernel {k} does not fit height {h} with padding {pad}"
            ))
        })?;
        let wo = conv_out_extent(w, k, stride, pad).ok_or_else(|| {
            Error::InvalidArgument(format!(
                "{ctx}: kernel {k} does not fit width {w} with padding {pad}"
            ))
        })?;
        Ok(Geometry {
            channels,
            h,
            w,
            k,
            stride,
            pad,
            ho,
            wo,
        })
    }

    fn rows(&self) -> usize {
        self.channels * self.k * self.k
    }

    fn cols(&self) -> usize {
        self.ho * self.wo
    }

    fn is_pointwise(&self) -> bool {
        self.k == 1 && self.stride == 1 && self.pad == 0
    }
}

/// `floor((n + 2p - k) / s) + 1`, or `None` when the kernel does not fit.
pub fn conv_out_extent(n: usize, k: usize, stride: usize, pad: usize) -> Option<usize> {
    let padded = n + 2 * pad;
    (padded >= k && stride > 0).then(|| (padded - k) / stride + 1)
}

fn im2col(img: &[f32], g: &Geometry, cols: &mut [f32]) {
    let p = g.cols();
    for c in 0..g.channels {
        let plane = &img[c * g.h * g.w..(c + 1) * g.h * g.w];
        for u in 0..g.k {
            for v in 0..g.k {
                let row = (c * g.k + u) * g.k + v;
                let out = &mut cols[row * p..(row + 1) * p];
                for i in 0..g.ho {
                    let y = (i * g.stride + u) as isize - g.pad as isize;
                    let dst = &mut out[i * g.wo..(i + 1) * g.wo];
                    if y < 0 || y >= g.h as isize {
                        dst.iter_mut().for_each(|d| *d = 0.0);
                        continue;
                    }
                    let src = &plane[y as usize * g.w..(y as usize + 1) * g.w];
                    for (j, d) in dst.iter_mut().enumerate() {
                        let x = (j * g.stride + v) as isize - g.pad as isize;
                        *d = if x < 0 || x >= g.w as isize {
                            0.0
                        } else {
                            src[x as usize]
                        };
                    }
                }
            }
        }
    }
}

fn col2im(cols: &[f32], g: &Geometry, img: &mut [f32]) {
    let p = g.cols();
    img.iter_mut().for_each(|v| *v = 0.0);
    for c in 0..g.channels {
        let plane = &mut img[c * g.h * g.w..(c + 1) * g.h * g.w];
        for u in 0..g.k {
            for v in 0..g.k {
                let row = (c * g.k + u) * g.k + v;
                let src = &cols[row * p..(row + 1) * p];
                for i in 0..g.ho {
                    let y = (i * g.stride + u) as isize - g.pad as isize;
                    if y < 0 || y >= g.h as isize {
                        continue;
                    }
                    let dst = &mut plane[y as usize * g.w..(y as usize + 1) * g.w];
                    for j in 0..g.wo {
                        let x = (j * g.stride + v) as isize - g.pad as isize;
                        if x >= 0 && x < g.w as isize {
                            dst[x as usize] += src[i * g.wo + j];
                        }
                    }
                }
            }
        }
    }
}

fn check_input(ctx: &str, x: &Tensor, channels: usize) -> Result<()> {
    if x.shape().c != channels {
        return Err(Error::shape(ctx, "input channels", channels, x.shape().c));
    }
    Ok(())
}

fn sum_in_order(parts: Vec<Vec<f32>>, len: usize) -> Vec<f32> {
    let mut acc = vec![0.0; len];
    for part in parts {
        for (a, p) in acc.iter_mut().zip(&part) {
            *a += p;
        }
    }
    acc
}

pub fn conv2d_forward(x: &Tensor, p: &ConvParams) -> Result<Tensor> {
    const CTX: &str = "conv2d";
    p.validate(CTX, p.out_channels())?;
    check_input(CTX, x, p.in_channels())?;
    let s = x.shape();
    let g = Geometry::new(CTX, s.c, s.h, s.w, p.kernel(), p.stride, p.padding)?;
    let cout = p.out_channels();
    let out_shape = Shape::new(s.n, cout, g.ho, g.wo);
    let mut y = Tensor::zeros(out_shape);
    let w = p.weights.data();
    let (rows, ncols) = (g.rows(), g.cols());

    y.data_mut()
        .par_chunks_mut(out_shape.sample_len())
        .enumerate()
        .for_each(|(n, out)| {
            for (co, b) in p.bias.iter().enumerate() {
                out[co * ncols..(co + 1) * ncols]
                    .iter_mut()
                    .for_each(|v| *v = *b);
            }
            let img = x.sample(n);
            if g.is_pointwise() {
                gemm(
                    Mat::new(w, cout, rows),
                    Mat::new(img, rows, ncols),
                    1.0,
                    out,
                );
            } else {
                let mut cols = vec![0.0; rows * ncols];
                im2col(img, &g, &mut cols);
                gemm(
                    Mat::new(w, cout, rows),
                    Mat::new(&cols, rows, ncols),
                    1.0,
                    out,
                );
            }
        });
    Ok(y)
}

pub fn conv2d_backward(x: &Tensor, p: &ConvParams, dy: &Tensor) -> Result<ConvGrads> {
    const CTX: &str = "conv2d backward";
    p.validate(CTX, p.out_channels())?;
    check_input(CTX, x, p.in_channels())?;
    let s = x.shape();
    let g = Geometry::new(CTX, s.c, s.h, s.w, p.kernel(), p.stride, p.padding)?;
    let cout = p.out_channels();
    crate::tensor::ensure_same_shape(CTX, Shape::new(s.n, cout, g.ho, g.wo), dy.shape())?;
    let w = p.weights.data();
    let (rows, ncols) = (g.rows(), g.cols());

    let mut dx = Tensor::zeros(s);
    let partials: Vec<(Vec<f32>, Vec<f32>)> = dx
        .data_mut()
        .par_chunks_mut(s.sample_len())
        .enumerate()
        .map(|(n, dx_n)| {
            let dy_n = dy.sample(n);
            let mut dw = vec![0.0; cout * rows];
            let db: Vec<f32> = (0..cout)
                .map(|co| dy_n[co * ncols..(co + 1) * ncols].iter().sum())
                .collect();
            if g.is_pointwise() {
                gemm(
                    Mat::new(dy_n, cout, ncols),
                    Mat::t(x.sample(n), rows, ncols),
                    0.0,
                    &mut dw,
                );
                gemm(
                    Mat::t(w, cout, rows),
                    Mat::new(dy_n, cout, ncols),
                    0.0,
                    dx_n,
                );
            } else {
                let mut cols = vec![0.0; rows * ncols];
                im2col(x.sample(n), &g, &mut cols);
                gemm(
                    Mat::new(dy_n, cout, ncols),
                    Mat::t(&cols, rows, ncols),
                    0.0,
                    &mut dw,
                );
                gemm(
                    Mat::t(w, cout, rows),
                    Mat::new(dy_n, cout, ncols),
                    0.0,
                    &mut cols,
                );
                col2im(&cols, &g, dx_n);
            }
            (dw, db)
        })
        .collect();

    let (dws, dbs): (Vec<_>, Vec<_>) = partials.into_iter().unzip();
    let dw = Tensor::from_vec(p.weights.shape(), sum_in_order(dws, cout * rows))?;
    Ok(ConvGrads {
        dx,
        dw,
        db: sum_in_order(dbs, cout),
    })
}

/// Output extent of a transposed convolution: `(n - 1) * s + k - 2p`.
pub fn conv_transpose_out_extent(n: usize, k: usize, stride: usize, pad: usize) -> Option<usize> {
    if n == 0 {
        return None;
    }
    let full = (n - 1) * stride + k;
    (full > 2 * pad).then(|| full - 2 * pad)
}

fn transpose_geometry(ctx: &str, x: &Tensor, p: &ConvParams) -> Result<Geometry> {
    let s = x.shape();
    let k = p.kernel();
    let ho = conv_transpose_out_extent(s.h, k, p.stride, p.padding)
        .ok_or_else(|| Error::InvalidArgument(format!("{ctx}: non-positive output height")))?;
    let wo = conv_transpose_out_extent(s.w, k, p.stride, p.padding)
        .ok_or_else(|| Error::InvalidArgument(format!("{ctx}: non-positive output width")))?;
    // Geometry of the adjoint convolution, which maps the output back onto x.
    let g = Geometry::new(ctx, p.in_channels(), ho, wo, k, p.stride, p.padding)?;
    debug_assert_eq!((g.ho, g.wo), (s.h, s.w));
    Ok(g)
}

pub fn conv_transpose2d_forward(x: &Tensor, p: &ConvParams) -> Result<Tensor> {
    const CTX: &str = "conv_transpose2d";
    p.validate(CTX, p.in_channels())?;
    check_input(CTX, x, p.out_channels())?;
    let s = x.shape();
    let g = transpose_geometry(CTX, x, p)?;
    let cin = p.out_channels();
    let cout = p.in_channels();
    let out_shape = Shape::new(s.n, cout, g.h, g.w);
    let (rows, ncols) = (g.rows(), g.cols());
    let w = p.weights.data();
    let mut y = Tensor::zeros(out_shape);

    y.data_mut()
        .par_chunks_mut(out_shape.sample_len())
        .enumerate()
        .for_each(|(n, out)| {
            let mut cols = vec![0.0; rows * ncols];
            gemm(
                Mat::t(w, cin, rows),
                Mat::new(x.sample(n), cin, ncols),
                0.0,
                &mut cols,
            );
            col2im(&cols, &g, out);
            let plane = g.h * g.w;
            for (co, b) in p.bias.iter().enumerate() {
                out[co * plane..(co + 1) * plane]
                    .iter_mut()
                    .for_each(|v| *v += b);
            }
        });
    Ok(y)
}

pub fn conv_transpose2d_backward(x: &Tensor, p: &ConvParams, dy: &Tensor) -> Result<ConvGrads> {
    const CTX: &str = "conv_transpose2d backward";
    p.validate(CTX, p.in_channels())?;
    check_input(CTX, x, p.out_channels())?;
    let s = x.shape();
    let g = transpose_geometry(CTX, x, p)?;
    let cin = p.out_channels();
    let cout = p.in_channels();
    crate::tensor::ensure_same_shape(CTX, Shape::new(s.n, cout, g.h, g.w), dy.shape())?;
    let (rows, ncols) = (g.rows(), g.cols());
    let w = p.weights.data();
    let plane = g.h * g.w;

    let mut dx = Tensor::zeros(s);
    let partials: Vec<(Vec<f32>, Vec<f32>)> = dx
        .data_mut()
        .par_chunks_mut(s.sample_len())
        .enumerate()
        .map(|(n, dx_n)| {
            let dy_n = dy.sample(n);
            let mut cols = vec![0.0; rows * ncols];
            im2col(dy_n, &g, &mut cols);
            gemm(
                Mat::new(w, cin, rows),
                Mat::new(&cols, rows, ncols),
                0.0,
                dx_n,
            );
            let mut dw = vec![0.0; cin * rows];
            gemm(
                Mat::new(x.sample(n), cin, ncols),
                Mat::t(&cols, rows, ncols),
                0.0,
                &mut dw,
            );
            let db = (0..cout)
                .map(|co| dy_n[co * plane..(co + 1) * plane].iter().sum())
                .collect();
            (dw, db)
        })
        .collect();

    let (dws, dbs): (Vec<_>, Vec<_>) = partials.into_iter().unzip();
    Ok(ConvGrads {
        dx,
        dw: Tensor::from_vec(p.weights.shape(), sum_in_order(dws, cin * rows))?,
        db: sum_in_order(dbs, cout),
    })
}

/// Direct sliding-window convolution. Slow; kept as the reference the
/// GEMM path is checked against.
pub fn conv2d_naive(x: &Tensor, p: &ConvParams) -> Result<Tensor> {
    p.validate("conv2d_naive", p.out_channels())?;
    check_input("conv2d_naive", x, p.in_channels())?;
    let s = x.shape();
    let k = p.kernel();
    let ho = conv_out_extent(s.h, k, p.stride, p.padding)
        .ok_or_else(|| Error::InvalidArgument("conv2d_naive: kernel does not fit".into()))?;
    let wo = conv_out_extent(s.w, k, p.stride, p.padding)
        .ok_or_else(|| Error::InvalidArgument("conv2d_naive: kernel does not fit".into()))?;
    let cout = p.out_channels();
    let mut y = Tensor::zeros(Shape::new(s.n, cout, ho, wo));
    for n in 0..s.n {
        for co in 0..cout {
            for i in 0..ho {
                for j in 0..wo {
                    let mut acc = p.bias[co] as f64;
                    for ci in 0..s.c {
                        for u in 0..k {
                            for v in 0..k {
                                let yy = (i * p.stride + u) as isize - p.padding as isize;
                                let xx = (j * p.stride + v) as isize - p.padding as isize;
                                if yy < 0 || xx < 0 || yy >= s.h as isize || xx >= s.w as isize {
                                    continue;
                                }
                                acc += p.weights.at(co, ci, u, v) as f64
                                    * x.at(n, ci, yy as usize, xx as usize) as f64;
                            }
                        }
                    }
                    let idx = y.index(n, co, i, j);
                    y.data_mut()[idx] = acc as f32;
                }
            }
        }
    }
    Ok(y)
}
