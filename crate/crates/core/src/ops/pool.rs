use crate::error::{Error, Result};
use crate::tensor::{ensure_same_shape, Shape, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PoolSpec {
    pub window: usize,
    pub stride: usize,
    /// Implicit `-inf` border.
    pub padding: usize,
}

impl PoolSpec {
    pub fn new(window: usize, stride: usize) -> Self {
        PoolSpec {
            window,
            stride,
            padding: 0,
        }
    }

    pub fn padded(window: usize, stride: usize, padding: usize) -> Self {
        PoolSpec {
            window,
            stride,
            padding,
        }
    }

    pub fn out_extent(&self, n: usize) -> Option<usize> {
        if self.window == 0 || self.stride == 0 || self.padding >= self.window {
            return None;
        }
        let padded = n + 2 * self.padding;
        (padded >= self.window && n > 0).then(|| (padded - self.window) / self.stride + 1)
    }
}

/// Max pooling output plus, per output element, the flat input index that won.
pub fn maxpool2d(x: &Tensor, spec: PoolSpec) -> Result<(Tensor, Vec<usize>)> {
    let s = x.shape();
    let ho = spec.out_extent(s.h).ok_or_else(|| {
        Error::InvalidArgument(format!(
            "maxpool window {} larger than height {}",
            spec.window, s.h
        ))
    })?;
    let wo = spec.out_extent(s.w).ok_or_else(|| {
        Error::InvalidArgument(format!(
            "maxpool window {} larger than width {}",
            spec.window, s.w
        ))
    })?;
    let out_shape = Shape::new(s.n, s.c, ho, wo);
    let mut y = Tensor::zeros(out_shape);
    let mut argmax = vec![0usize; out_shape.numel()];
    // clipped window bounds per output row/column
    let range = |o: usize, n: usize| {
        let start = (o * spec.stride) as isize - spec.padding as isize;
        let lo = start.max(0) as usize;
        let hi = ((start + spec.window as isize) as usize).min(n);
        (lo, hi)
    };
    let rows: Vec<(usize, usize)> = (0..ho).map(|i| range(i, s.h)).collect();
    let cols: Vec<(usize, usize)> = (0..wo).map(|j| range(j, s.w)).collect();
    let out = y.data_mut();
    let mut o = 0;
    for (p, plane) in x.data().chunks_exact(s.plane()).enumerate() {
        let base = p * s.plane();
        for &(r0, r1) in &rows {
            for &(c0, c1) in &cols {
                let mut best_idx = r0 * s.w + c0;
                let mut best = plane[best_idx];
                for r in r0..r1 {
                    let row = &plane[r * s.w..];
                    for (c, &v) in row[c0..c1].iter().enumerate() {
                        // strict comparison keeps the first maximum in scan order
                        if v > best {
                            best = v;
                            best_idx = r * s.w + c0 + c;
                        }
                    }
                }
                out[o] = best;
                argmax[o] = base + best_idx;
                o += 1;
            }
        }
    }
    Ok((y, argmax))
}

pub fn maxpool2d_backward(input_shape: Shape, argmax: &[usize], dy: &Tensor) -> Result<Tensor> {
    if argmax.len() != dy.len() {
        return Err(Error::shape(
            "maxpool backward",
            "length",
            argmax.len(),
            dy.len(),
        ));
    }
    let mut dx = Tensor::zeros(input_shape);
    let d = dx.data_mut();
    for (&src, &g) in argmax.iter().zip(dy.data()) {
        d[src] += g;
    }
    Ok(dx)
}

pub fn global_avg_pool(x: &Tensor) -> Result<Tensor> {
    let s = x.shape();
    let plane = s.plane();
    if plane == 0 {
        return Err(Error::InvalidArgument(
            "global average pool over empty plane".into(),
        ));
    }
    let data = x
        .data()
        .chunks(plane)
        .map(|ch| (ch.iter().map(|&v| v as f64).sum::<f64>() / plane as f64) as f32)
        .collect();
    Tensor::from_vec(Shape::new(s.n, s.c, 1, 1), data)
}

pub fn global_avg_pool_backward(input_shape: Shape, dy: &Tensor) -> Result<Tensor> {
    ensure_same_shape(
        "global average pool backward",
        Shape::new(input_shape.n, input_shape.c, 1, 1),
        dy.shape(),
    )?;
    let plane = input_shape.plane();
    let scale = 1.0 / plane as f32;
    let mut dx = Tensor::zeros(input_shape);
    for (ch, &g) in dx.data_mut().chunks_mut(plane).zip(dy.data()) {
        ch.iter_mut().for_each(|v| *v = g * scale);
    }
    Ok(dx)
}
