use super::gemm::{gemm, Mat};
use crate::error::{Error, Result};
use crate::tensor::{Shape, Tensor};

/// Fully connected layer: `weights` is `(out, in, 1, 1)`.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseParams {
    pub weights: Tensor,
    pub bias: Vec<f32>,
}

#[derive(Clone, Debug)]
pub struct DenseGrads {
    pub dx: Tensor,
    pub dw: Tensor,
    pub db: Vec<f32>,
}

impl DenseParams {
    pub fn outputs(&self) -> usize {
        self.weights.shape().n
    }

    pub fn inputs(&self) -> usize {
        self.weights.shape().c
    }

    /// Row `k` of the weight matrix.
    pub fn row(&self, k: usize) -> &[f32] {
        let i = self.inputs();
        &self.weights.data()[k * i..(k + 1) * i]
    }

    fn check(&self, x: &Tensor) -> Result<usize> {
        let s = x.shape();
        let features = s.sample_len();
        if features != self.inputs() {
            return Err(Error::shape(
                "dense",
                "input features",
                self.inputs(),
                features,
            ));
        }
        if self.bias.len() != self.outputs() {
            return Err(Error::shape(
                "dense",
                "bias length",
                self.outputs(),
                self.bias.len(),
            ));
        }
        Ok(features)
    }
}

/// `y = W x + b` per sample; `x` is flattened over `(C, H, W)`.
pub fn dense_forward(x: &Tensor, p: &DenseParams) -> Result<Tensor> {
    let features = p.check(x)?;
    let n = x.shape().n;
    let out = p.outputs();
    let mut y = vec![0.0; n * out];
    for row in y.chunks_mut(out) {
        row.copy_from_slice(&p.bias);
    }
    gemm(
        Mat::new(x.data(), n, features),
        Mat::t(p.weights.data(), out, features),
        1.0,
        &mut y,
    );
    Tensor::from_vec(Shape::new(n, out, 1, 1), y)
}

pub fn dense_backward(x: &Tensor, p: &DenseParams, dy: &Tensor) -> Result<DenseGrads> {
    let features = p.check(x)?;
    let n = x.shape().n;
    let out = p.outputs();
    crate::tensor::ensure_same_shape("dense backward", Shape::new(n, out, 1, 1), dy.shape())?;
    let mut dx = vec![0.0; n * features];
    gemm(
        Mat::new(dy.data(), n, out),
        Mat::new(p.weights.data(), out, features),
        0.0,
        &mut dx,
    );
    let mut dw = vec![0.0; out * features];
    gemm(
        Mat::t(dy.data(), n, out),
        Mat::new(x.data(), n, features),
        0.0,
        &mut dw,
    );
    let mut db = vec![0.0; out];
    for row in dy.data().chunks(out) {
        for (b, g) in db.iter_mut().zip(row) {
            *b += g;
        }
    }
    Ok(DenseGrads {
        dx: Tensor::from_vec(x.shape(), dx)?,
        dw: Tensor::from_vec(p.weights.shape(), dw)?,
        db,
    })
}
