use crate::error::{Error, Result};
use crate::tensor::{Shape, Tensor};

/// Concatenates along the channel axis, preserving input order.
pub fn concat_depth(xs: &[&Tensor]) -> Result<Tensor> {
    let first = xs
        .first()
        .ok_or_else(|| Error::InvalidArgument("concat of zero tensors".into()))?
        .shape();
    for t in &xs[1..] {
        let s = t.shape();
        if s.n != first.n {
            return Err(Error::shape("concat", "batch", first.n, s.n));
        }
        if s.h != first.h {
            return Err(Error::shape("concat", "height", first.h, s.h));
        }
        if s.w != first.w {
            return Err(Error::shape("concat", "width", first.w, s.w));
        }
    }
    let channels = xs.iter().map(|t| t.shape().c).sum();
    let out_shape = Shape::new(first.n, channels, first.h, first.w);
    let mut data = Vec::with_capacity(out_shape.numel());
    for n in 0..first.n {
        for t in xs {
            data.extend_from_slice(t.sample(n));
        }
    }
    Tensor::from_vec(out_shape, data)
}

/// Splits an upstream gradient back into per-input channel slices.
pub fn concat_depth_backward(channels: &[usize], dy: &Tensor) -> Result<Vec<Tensor>> {
    let s = dy.shape();
    let total: usize = channels.iter().sum();
    if total != s.c {
        return Err(Error::shape("concat backward", "channels", total, s.c));
    }
    let plane = s.plane();
    let mut parts: Vec<Vec<f32>> = channels
        .iter()
        .map(|c| Vec::with_capacity(s.n * c * plane))
        .collect();
    for n in 0..s.n {
        let mut offset = 0;
        let sample = dy.sample(n);
        for (part, &c) in parts.iter_mut().zip(channels) {
            part.extend_from_slice(&sample[offset * plane..(offset + c) * plane]);
            offset += c;
        }
    }
    parts
        .into_iter()
        .zip(channels)
        .map(|(data, &c)| Tensor::from_vec(Shape::new(s.n, c, s.h, s.w), data))
        .collect()
}
