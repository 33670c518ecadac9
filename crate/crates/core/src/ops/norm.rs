use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const BN_EPSILON: f32 = 1e-5;
/// Weight kept on the old running statistic at each update.
pub const BN_MOMENTUM: f32 = 0.9;

#[derive(Clone, Debug, PartialEq)]
pub struct BatchNormParams {
    pub gamma: Vec<f32>,
    pub beta: Vec<f32>,
    pub running_mean: Vec<f32>,
    pub running_var: Vec<f32>,
    pub epsilon: f32,
    pub momentum_stat: f32,
}

impl BatchNormParams {
    pub fn new(channels: usize) -> Self {
        BatchNormParams {
            gamma: vec![1.0; channels],
            beta: vec![0.0; channels],
            running_mean: vec![0.0; channels],
            running_var: vec![1.0; channels],
            epsilon: BN_EPSILON,
            momentum_stat: BN_MOMENTUM,
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    fn validate(&self, channels: usize) -> Result<()> {
        for (name, v) in [
            ("gamma", &self.gamma),
            ("beta", &self.beta),
            ("running_mean", &self.running_mean),
            ("running_var", &self.running_var),
        ] {
            if v.len() != channels {
                return Err(Error::shape(
                    format!("batchnorm {name}"),
                    "channels",
                    channels,
                    v.len(),
                ));
            }
        }
        Ok(())
    }
}

/// Batch statistics captured by a training-mode forward pass.
#[derive(Clone, Debug)]
pub struct BatchNormCache {
    pub mean: Vec<f32>,
    pub inv_std: Vec<f32>,
}

#[derive(Clone, Debug)]
pub struct BatchNormGrads {
    pub dx: Tensor,
    pub dgamma: Vec<f32>,
    pub dbeta: Vec<f32>,
}

fn channel_iter(x: &Tensor, c: usize) -> impl Iterator<Item = &f32> {
    let s = x.shape();
    let plane = s.plane();
    (0..s.n).flat_map(move |n| x.sample(n)[c * plane..(c + 1) * plane].iter())
}

/// Training mode normalizes with batch statistics and updates the running
/// averages in `p`; inference mode uses the running statistics.
pub fn batchnorm_forward(
    x: &Tensor,
    p: &mut BatchNormParams,
    training: bool,
) -> Result<(Tensor, Option<BatchNormCache>)> {
    let s = x.shape();
    p.validate(s.c)?;
    if training {
        let count = s.n * s.plane();
        if count == 0 {
            return Err(Error::InvalidArgument(
                "batchnorm over zero elements".into(),
            ));
        }
        let mut mean = vec![0.0; s.c];
        let mut var = vec![0.0; s.c];
        for c in 0..s.c {
            let m = channel_iter(x, c).map(|&v| v as f64).sum::<f64>() / count as f64;
            let v = channel_iter(x, c)
                .map(|&v| (v as f64 - m).powi(2))
                .sum::<f64>()
                / count as f64;
            mean[c] = m as f32;
            var[c] = v as f32;
        }
        let inv_std: Vec<f32> = var.iter().map(|v| 1.0 / (v + p.epsilon).sqrt()).collect();
        let y = apply(x, &mean, &inv_std, &p.gamma, &p.beta);
        let unbiased = if count > 1 {
            count as f32 / (count - 1) as f32
        } else {
            1.0
        };
        let m = p.momentum_stat;
        for c in 0..s.c {
            p.running_mean[c] = m * p.running_mean[c] + (1.0 - m) * mean[c];
            p.running_var[c] = m * p.running_var[c] + (1.0 - m) * var[c] * unbiased;
        }
        Ok((y, Some(BatchNormCache { mean, inv_std })))
    } else {
        let inv_std: Vec<f32> = p
            .running_var
            .iter()
            .map(|v| 1.0 / (v + p.epsilon).sqrt())
            .collect();
        Ok((apply(x, &p.running_mean, &inv_std, &p.gamma, &p.beta), None))
    }
}

/// Inference-mode forward without touching parameters.
pub fn batchnorm_infer(x: &Tensor, p: &BatchNormParams) -> Result<Tensor> {
    p.validate(x.shape().c)?;
    let inv_std: Vec<f32> = p
        .running_var
        .iter()
        .map(|v| 1.0 / (v + p.epsilon).sqrt())
        .collect();
    Ok(apply(x, &p.running_mean, &inv_std, &p.gamma, &p.beta))
}

fn apply(x: &Tensor, mean: &[f32], inv_std: &[f32], gamma: &[f32], beta: &[f32]) -> Tensor {
    let s = x.shape();
    let plane = s.plane();
    let mut y = Tensor::zeros(s);
    for n in 0..s.n {
        let src = x.sample(n);
        let dst = y.sample_mut(n);
        for c in 0..s.c {
            let scale = gamma[c] * inv_std[c];
            let shift = beta[c] - mean[c] * scale;
            for (d, v) in dst[c * plane..(c + 1) * plane]
                .iter_mut()
                .zip(&src[c * plane..(c + 1) * plane])
            {
                *d = v * scale + shift;
            }
        }
    }
    y
}

/// Backward of the training-mode forward.
pub fn batchnorm_backward(
    x: &Tensor,
    p: &BatchNormParams,
    cache: &BatchNormCache,
    dy: &Tensor,
) -> Result<BatchNormGrads> {
    let s = x.shape();
    p.validate(s.c)?;
    crate::tensor::ensure_same_shape("batchnorm backward", s, dy.shape())?;
    let plane = s.plane();
    let count = (s.n * plane) as f64;
    let mut dx = Tensor::zeros(s);
    let mut dgamma = vec![0.0; s.c];
    let mut dbeta = vec![0.0; s.c];
    for c in 0..s.c {
        let (mean, inv_std) = (cache.mean[c] as f64, cache.inv_std[c] as f64);
        let mut sum_dy = 0.0f64;
        let mut sum_dy_xhat = 0.0f64;
        for n in 0..s.n {
            let xs = &x.sample(n)[c * plane..(c + 1) * plane];
            let ds = &dy.sample(n)[c * plane..(c + 1) * plane];
            for (&xv, &dv) in xs.iter().zip(ds) {
                let xhat = (xv as f64 - mean) * inv_std;
                sum_dy += dv as f64;
                sum_dy_xhat += dv as f64 * xhat;
            }
        }
        dgamma[c] = sum_dy_xhat as f32;
        dbeta[c] = sum_dy as f32;
        let k = p.gamma[c] as f64 * inv_std / count;
        for n in 0..s.n {
            let start = c * plane;
            let xs = &x.sample(n)[start..start + plane];
            let ds = &dy.sample(n)[start..start + plane];
            let out: Vec<f32> = xs
                .iter()
                .zip(ds)
                .map(|(&xv, &dv)| {
                    let xhat = (xv as f64 - mean) * inv_std;
                    (k * (count * dv as f64 - sum_dy - xhat * sum_dy_xhat)) as f32
                })
                .collect();
            dx.sample_mut(n)[start..start + plane].copy_from_slice(&out);
        }
    }
    Ok(BatchNormGrads { dx, dgamma, dbeta })
}
