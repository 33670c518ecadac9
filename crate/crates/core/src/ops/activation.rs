use crate::error::Result;
use crate::tensor::{ensure_same_shape, Tensor};

pub const ELU_ALPHA: f32 = 1.0;

pub fn elu(x: &Tensor, alpha: f32) -> Tensor {
    x.map(|v| if v > 0.0 { v } else { alpha * v.exp_m1() })
}

/// Gradient through ELU given its output `y`: `1` where `y > 0`, `y + alpha` elsewhere.
pub fn elu_backward(y: &Tensor, alpha: f32, dy: &Tensor) -> Result<Tensor> {
    ensure_same_shape("elu backward", y.shape(), dy.shape())?;
    let mut dx = dy.clone();
    for (d, &out) in dx.data_mut().iter_mut().zip(y.data()) {
        if out <= 0.0 {
            *d *= out + alpha;
        }
    }
    Ok(dx)
}

pub fn relu(x: &Tensor) -> Tensor {
    x.map(|v| v.max(0.0))
}

/// Subgradient 0 at the origin.
pub fn relu_backward(y: &Tensor, dy: &Tensor) -> Result<Tensor> {
    ensure_same_shape("relu backward", y.shape(), dy.shape())?;
    let mut dx = dy.clone();
    for (d, &out) in dx.data_mut().iter_mut().zip(y.data()) {
        if out <= 0.0 {
            *d = 0.0;
        }
    }
    Ok(dx)
}
