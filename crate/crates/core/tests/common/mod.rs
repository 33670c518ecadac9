//! Independent double-precision reference layers and a finite-difference
//! gradient checker shared by the integration tests and the acceptance run.
#![allow(dead_code)]

use firenet::ops::{self, ConvParams, DenseParams, PoolSpec};
use firenet::{Shape, Tensor};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const GRAD_TOL: f64 = 1e-4;
const STEP: f64 = 1e-6;

pub const LAYERS: [&str; 9] = [
    "conv", "conv_transpose", "batchnorm", "elu", "relu", "maxpool", "gap", "dense", "softmax_ce",
];

fn idx(s: Shape, n: usize, c: usize, h: usize, w: usize) -> usize {
    ((n * s.c + c) * s.h + h) * s.w + w
}

fn f64s(t: &Tensor) -> Vec<f64> {
    t.data().iter().map(|&v| v as f64).collect()
}

fn tensor(shape: Shape, v: &[f64]) -> Tensor {
    Tensor::from_vec(shape, v.iter().map(|&x| x as f32).collect()).unwrap()
}

fn randn(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    // values representable in f32 so both precisions see the same point
    (0..len)
        .map(|_| rng.gen_range(-1.0f32..1.0) as f64)
        .collect()
}

pub fn conv_ref(x: &[f64], s: Shape, w: &[f64], ws: Shape, b: &[f64], stride: usize, pad: usize) -> (Vec<f64>, Shape) {
    let ho = (s.h + 2 * pad - ws.h) / stride + 1;
    let wo = (s.w + 2 * pad - ws.w) / stride + 1;
    let os = Shape::new(s.n, ws.n, ho, wo);
    let mut y = vec![0.0; s.n * ws.n * ho * wo];
    for n in 0..s.n {
        for co in 0..ws.n {
            for i in 0..ho {
                for j in 0..wo {
                    let mut acc = b[co];
                    for ci in 0..s.c {
                        for u in 0..ws.h {
                            for v in 0..ws.w {
                                let r = (i * stride + u) as isize - pad as isize;
                                let c = (j * stride + v) as isize - pad as isize;
                                if r < 0 || c < 0 || r >= s.h as isize || c >= s.w as isize {
                                    continue;
                                }
                                acc += w[idx(ws, co, ci, u, v)] * x[idx(s, n, ci, r as usize, c as usize)];
                            }
                        }
                    }
                    y[idx(os, n, co, i, j)] = acc;
                }
            }
        }
    }
    (y, os)
}

/// Transposed convolution; `ws` is `(in, out, k, k)`.
pub fn conv_transpose_ref(x: &[f64], s: Shape, w: &[f64], ws: Shape, b: &[f64], stride: usize, pad: usize) -> (Vec<f64>, Shape) {
    let ho = (s.h - 1) * stride + ws.h - 2 * pad;
    let wo = (s.w - 1) * stride + ws.w - 2 * pad;
    let os = Shape::new(s.n, ws.c, ho, wo);
    let mut y = vec![0.0; os.n * os.c * ho * wo];
    for n in 0..s.n {
        for co in 0..ws.c {
            for r in 0..ho {
                for c in 0..wo {
                    y[idx(os, n, co, r, c)] = b[co];
                }
            }
            for ci in 0..s.c {
                for i in 0..s.h {
                    for j in 0..s.w {
                        for u in 0..ws.h {
                            for v in 0..ws.w {
                                let r = (i * stride + u) as isize - pad as isize;
                                let c = (j * stride + v) as isize - pad as isize;
                                if r < 0 || c < 0 || r >= ho as isize || c >= wo as isize {
                                    continue;
                                }
                                y[idx(os, n, co, r as usize, c as usize)] +=
                                    x[idx(s, n, ci, i, j)] * w[idx(ws, ci, co, u, v)];
                            }
                        }
                    }
                }
            }
        }
    }
    (y, os)
}

/// Training-mode batch norm with biased batch variance.
pub fn batchnorm_ref(x: &[f64], s: Shape, gamma: &[f64], beta: &[f64], eps: f64) -> Vec<f64> {
    let m = (s.n * s.h * s.w) as f64;
    let mut y = vec![0.0; x.len()];
    for c in 0..s.c {
        let at = |n, h, w| idx(s, n, c, h, w);
        let mut mean = 0.0;
        for n in 0..s.n {
            for h in 0..s.h {
                for w in 0..s.w {
                    mean += x[at(n, h, w)];
                }
            }
        }
        mean /= m;
        let mut var = 0.0;
        for n in 0..s.n {
            for h in 0..s.h {
                for w in 0..s.w {
                    var += (x[at(n, h, w)] - mean).powi(2);
                }
            }
        }
        var /= m;
        for n in 0..s.n {
            for h in 0..s.h {
                for w in 0..s.w {
                    y[at(n, h, w)] = gamma[c] * (x[at(n, h, w)] - mean) / (var + eps).sqrt() + beta[c];
                }
            }
        }
    }
    y
}

pub fn maxpool_ref(x: &[f64], s: Shape, win: usize, stride: usize, pad: usize) -> (Vec<f64>, Shape) {
    let ho = (s.h + 2 * pad - win) / stride + 1;
    let wo = (s.w + 2 * pad - win) / stride + 1;
    let os = Shape::new(s.n, s.c, ho, wo);
    let mut y = vec![f64::NEG_INFINITY; os.n * os.c * ho * wo];
    for n in 0..s.n {
        for c in 0..s.c {
            for i in 0..ho {
                for j in 0..wo {
                    for u in 0..win {
                        for v in 0..win {
                            let r = (i * stride + u) as isize - pad as isize;
                            let q = (j * stride + v) as isize - pad as isize;
                            if r < 0 || q < 0 || r >= s.h as isize || q >= s.w as isize {
                                continue;
                            }
                            let o = idx(os, n, c, i, j);
                            y[o] = y[o].max(x[idx(s, n, c, r as usize, q as usize)]);
                        }
                    }
                }
            }
        }
    }
    (y, os)
}

pub fn gap_ref(x: &[f64], s: Shape) -> Vec<f64> {
    x.chunks(s.h * s.w)
        .map(|p| p.iter().sum::<f64>() / p.len() as f64)
        .collect()
}

pub fn dense_ref(x: &[f64], n: usize, w: &[f64], outs: usize, b: &[f64]) -> Vec<f64> {
    let ins = w.len() / outs;
    let mut y = vec![0.0; n * outs];
    for s in 0..n {
        for o in 0..outs {
            y[s * outs + o] = b[o] + (0..ins).map(|i| w[o * ins + i] * x[s * ins + i]).sum::<f64>();
        }
    }
    y
}

pub fn softmax_ce_ref(logits: &[f64], k: usize, labels: &[usize]) -> f64 {
    logits
        .chunks(k)
        .zip(labels)
        .map(|(row, &l)| {
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let z = row.iter().map(|v| (v - max).exp()).sum::<f64>().ln() + max;
            z - row[l]
        })
        .sum::<f64>()
        / labels.len() as f64
}

/// Central differences of `f` at `x` for every coordinate.
pub fn numeric_grad(x: &[f64], f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
    let mut p = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = p[i];
            p[i] = orig + STEP;
            let hi = f(&p);
            p[i] = orig - STEP;
            let lo = f(&p);
            p[i] = orig;
            (hi - lo) / (2.0 * STEP)
        })
        .collect()
}

/// `|a - n| / max(|a|, |n|)` in the Euclidean norm.
pub fn rel_err(analytic: &[f32], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    let mut diff = 0.0;
    let mut na = 0.0;
    let mut nn = 0.0;
    for (&a, &n) in analytic.iter().zip(numeric) {
        diff += (a as f64 - n).powi(2);
        na += (a as f64).powi(2);
        nn += n * n;
    }
    let scale = na.sqrt().max(nn.sqrt());
    if scale < 1e-12 {
        0.0
    } else {
        diff.sqrt() / scale
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn conv_case(rng: &mut ChaCha8Rng, transpose: bool) -> (Shape, Shape, usize, usize) {
    loop {
        let k = rng.gen_range(1..=3);
        let stride = rng.gen_range(1..=2);
        let pad = rng.gen_range(0..k);
        let s = Shape::new(rng.gen_range(1..=2), rng.gen_range(1..=3), rng.gen_range(k..k + 4), rng.gen_range(k..k + 4));
        let (a, b) = (rng.gen_range(1..=3), s.c);
        let ws = if transpose { Shape::new(b, a, k, k) } else { Shape::new(a, b, k, k) };
        let fits = if transpose {
            (s.h - 1) * stride + k > 2 * pad && (s.w - 1) * stride + k > 2 * pad
        } else {
            s.h + 2 * pad >= k && s.w + 2 * pad >= k
        };
        if fits {
            return (s, ws, stride, pad);
        }
    }
}

/// Largest relative error over every gradient of one random instance of `layer`.
pub fn grad_check(layer: &str, instance: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(0x6772_6164 ^ instance.wrapping_mul(0x9e37_79b9));
    match layer {
        "conv" | "conv_transpose" => {
            let transpose = layer == "conv_transpose";
            let (s, ws, stride, pad) = conv_case(&mut rng, transpose);
            let x = randn(&mut rng, s.numel());
            let w = randn(&mut rng, ws.numel());
            let cout = if transpose { ws.c } else { ws.n };
            let b = randn(&mut rng, cout);
            let f = |x: &[f64], w: &[f64], b: &[f64]| {
                if transpose {
                    conv_transpose_ref(x, s, w, ws, b, stride, pad)
                } else {
                    conv_ref(x, s, w, ws, b, stride, pad)
                }
            };
            let (_, os) = f(&x, &w, &b);
            let r = randn(&mut rng, os.numel());
            let p = ConvParams::new(tensor(ws, &w), b.iter().map(|&v| v as f32).collect(), stride, pad);
            let xt = tensor(s, &x);
            let g = if transpose {
                ops::conv_transpose2d_backward(&xt, &p, &tensor(os, &r)).unwrap()
            } else {
                ops::conv2d_backward(&xt, &p, &tensor(os, &r)).unwrap()
            };
            let nx = numeric_grad(&x, |v| dot(&f(v, &w, &b).0, &r));
            let nw = numeric_grad(&w, |v| dot(&f(&x, v, &b).0, &r));
            let nb = numeric_grad(&b, |v| dot(&f(&x, &w, v).0, &r));
            rel_err(g.dx.data(), &nx)
                .max(rel_err(g.dw.data(), &nw))
                .max(rel_err(&g.db, &nb))
        }
        "batchnorm" => {
            let s = Shape::new(rng.gen_range(2..=4), rng.gen_range(1..=3), rng.gen_range(1..=3), rng.gen_range(1..=3));
            let x = randn(&mut rng, s.numel());
            let gamma: Vec<f64> = (0..s.c).map(|_| rng.gen_range(0.5f32..1.5) as f64).collect();
            let beta = randn(&mut rng, s.c);
            let r = randn(&mut rng, s.numel());
            let mut p = ops::BatchNormParams::new(s.c);
            p.gamma = gamma.iter().map(|&v| v as f32).collect();
            p.beta = beta.iter().map(|&v| v as f32).collect();
            let eps = p.epsilon as f64;
            let xt = tensor(s, &x);
            let (_, cache) = ops::batchnorm_forward(&xt, &mut p, true).unwrap();
            let g = ops::batchnorm_backward(&xt, &p, &cache.unwrap(), &tensor(s, &r)).unwrap();
            let nx = numeric_grad(&x, |v| dot(&batchnorm_ref(v, s, &gamma, &beta, eps), &r));
            let ng = numeric_grad(&gamma, |v| dot(&batchnorm_ref(&x, s, v, &beta, eps), &r));
            let nb = numeric_grad(&beta, |v| dot(&batchnorm_ref(&x, s, &gamma, v, eps), &r));
            rel_err(g.dx.data(), &nx)
                .max(rel_err(&g.dgamma, &ng))
                .max(rel_err(&g.dbeta, &nb))
        }
        "elu" | "relu" => {
            let s = Shape::new(rng.gen_range(1..=3), rng.gen_range(1..=3), 3, 3);
            // keep clear of the kink at zero
            let x: Vec<f64> = randn(&mut rng, s.numel())
                .into_iter()
                .map(|v| if v.abs() < 0.05 { v + 0.1f64.copysign(v) } else { v })
                .collect();
            let r = randn(&mut rng, s.numel());
            let xt = tensor(s, &x);
            let elu = layer == "elu";
            let (dx, f): (Tensor, fn(f64) -> f64) = if elu {
                let y = ops::elu(&xt, ops::ELU_ALPHA);
                (ops::elu_backward(&y, ops::ELU_ALPHA, &tensor(s, &r)).unwrap(), |v| if v > 0.0 { v } else { v.exp_m1() })
            } else {
                let y = ops::relu(&xt);
                (ops::relu_backward(&y, &tensor(s, &r)).unwrap(), |v| v.max(0.0))
            };
            let nx = numeric_grad(&x, |v| v.iter().zip(&r).map(|(a, b)| f(*a) * b).sum());
            rel_err(dx.data(), &nx)
        }
        "maxpool" => {
            let win = rng.gen_range(2..=3);
            let stride = rng.gen_range(1..=2);
            let pad = rng.gen_range(0..win);
            let s = Shape::new(rng.gen_range(1..=2), rng.gen_range(1..=2), rng.gen_range(win..win + 4), rng.gen_range(win..win + 4));
            // distinct values spaced far wider than the difference step
            let mut x: Vec<f64> = (0..s.numel()).map(|i| i as f64 * 0.01 - 1.0).collect();
            x.shuffle(&mut rng);
            let xt = tensor(s, &x);
            let (y, arg) = ops::maxpool2d(&xt, PoolSpec::padded(win, stride, pad)).unwrap();
            let r = randn(&mut rng, y.len());
            let dx = ops::maxpool2d_backward(s, &arg, &tensor(y.shape(), &r)).unwrap();
            let nx = numeric_grad(&x, |v| dot(&maxpool_ref(v, s, win, stride, pad).0, &r));
            rel_err(dx.data(), &nx)
        }
        "gap" => {
            let s = Shape::new(rng.gen_range(1..=3), rng.gen_range(1..=4), rng.gen_range(1..=5), rng.gen_range(1..=5));
            let x = randn(&mut rng, s.numel());
            let r = randn(&mut rng, s.n * s.c);
            let dx = ops::global_avg_pool_backward(s, &tensor(Shape::new(s.n, s.c, 1, 1), &r)).unwrap();
            let nx = numeric_grad(&x, |v| dot(&gap_ref(v, s), &r));
            rel_err(dx.data(), &nx)
        }
        "dense" => {
            let (n, ins, outs) = (rng.gen_range(1..=3), rng.gen_range(1..=6), rng.gen_range(1..=4));
            let x = randn(&mut rng, n * ins);
            let w = randn(&mut rng, outs * ins);
            let b = randn(&mut rng, outs);
            let r = randn(&mut rng, n * outs);
            let p = DenseParams {
                weights: tensor(Shape::new(outs, ins, 1, 1), &w),
                bias: b.iter().map(|&v| v as f32).collect(),
            };
            let g = ops::dense_backward(&tensor(Shape::new(n, ins, 1, 1), &x), &p, &tensor(Shape::new(n, outs, 1, 1), &r)).unwrap();
            let nx = numeric_grad(&x, |v| dot(&dense_ref(v, n, &w, outs, &b), &r));
            let nw = numeric_grad(&w, |v| dot(&dense_ref(&x, n, v, outs, &b), &r));
            let nb = numeric_grad(&b, |v| dot(&dense_ref(&x, n, &w, outs, v), &r));
            rel_err(g.dx.data(), &nx)
                .max(rel_err(g.dw.data(), &nw))
                .max(rel_err(&g.db, &nb))
        }
        "softmax_ce" => {
            let (n, k) = (rng.gen_range(1..=4), rng.gen_range(2..=5));
            let x: Vec<f64> = randn(&mut rng, n * k).into_iter().map(|v| 3.0 * v).collect();
            let labels: Vec<usize> = (0..n).map(|_| rng.gen_range(0..k)).collect();
            let (_, g) = ops::softmax_cross_entropy(&tensor(Shape::new(n, k, 1, 1), &x), &labels).unwrap();
            let nx = numeric_grad(&x, |v| softmax_ce_ref(v, k, &labels));
            rel_err(g.data(), &nx)
        }
        other => panic!("unknown layer {other}"),
    }
}

/// Largest absolute difference between the library convolution and the
/// reference for one random shape.
pub fn conv_forward_error(instance: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(0x636f_6e76 ^ instance.wrapping_mul(0x9e37_79b9));
    let k = rng.gen_range(1..=5);
    let stride = rng.gen_range(1..=3);
    let pad = rng.gen_range(0..k);
    let s = Shape::new(rng.gen_range(1..=3), rng.gen_range(1..=8), rng.gen_range(k..k + 12), rng.gen_range(k..k + 12));
    let ws = Shape::new(rng.gen_range(1..=8), s.c, k, k);
    let x = randn(&mut rng, s.numel());
    let w = randn(&mut rng, ws.numel());
    let b = randn(&mut rng, ws.n);
    let (reference, os) = conv_ref(&x, s, &w, ws, &b, stride, pad);
    let p = ConvParams::new(tensor(ws, &w), b.iter().map(|&v| v as f32).collect(), stride, pad);
    let y = ops::conv2d_forward(&tensor(s, &x), &p).unwrap();
    assert_eq!(y.shape(), os);
    f64s(&y)
        .iter()
        .zip(&reference)
        .map(|(a, r)| (a - r).abs())
        .fold(0.0, f64::max)
}
