//! Gaussian-process surrogate with a squared-exponential ARD kernel.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

pub const LENGTH_SCALE_GRID: [f64; 4] = [0.1, 0.2, 0.5, 1.0];
pub const NOISE_GRID: [f64; 3] = [1e-4, 1e-3, 1e-2];
const MIN_SIGNAL_VAR: f64 = 1e-6;
const MAX_JITTER_STEPS: i32 = 10;

#[derive(Clone, Debug, PartialEq)]
pub struct KernelParams {
    pub length_scales: Vec<f64>,
    pub signal_var: f64,
    pub noise_var: f64,
}

impl KernelParams {
    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        let d2: f64 = a
            .iter()
            .zip(b)
            .zip(&self.length_scales)
            .map(|((x, y), l)| ((x - y) / l).powi(2))
            .sum();
        self.signal_var * (-0.5 * d2).exp()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum KernelConfig {
    Fixed(KernelParams),
    /// Length scales and noise chosen by marginal likelihood over the fixed grids;
    /// signal variance is the sample variance of the objectives.
    Grid,
}

#[derive(Clone, Debug)]
pub struct Surrogate {
    pub params: KernelParams,
    pub x: Vec<Vec<f64>>,
    pub y_mean: f64,
    /// Diagonal jitter added on top of the noise to make the factorization succeed.
    pub jitter: f64,
    pub log_marginal_likelihood: f64,
    chol: Cholesky<f64, Dyn>,
    alpha: DVector<f64>,
}

fn factorize(
    x: &[Vec<f64>],
    yc: &DVector<f64>,
    params: &KernelParams,
) -> Result<(Cholesky<f64, Dyn>, DVector<f64>, f64, f64)> {
    let n = x.len();
    let k = DMatrix::from_fn(n, n, |i, j| params.eval(&x[i], &x[j]));
    let scale = params.signal_var.max(1.0);
    for step in 0..=MAX_JITTER_STEPS {
        let jitter = if step == 0 {
            0.0
        } else {
            scale * 10f64.powi(step - 13)
        };
        let mut m = k.clone();
        for i in 0..n {
            m[(i, i)] += params.noise_var + jitter;
        }
        if let Some(chol) = Cholesky::new(m) {
            let alpha = chol.solve(yc);
            let log_det: f64 = chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>() * 2.0;
            let lml = -0.5 * yc.dot(&alpha)
                - 0.5 * log_det
                - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln();
            return Ok((chol, alpha, jitter, lml));
        }
    }
    Err(Error::Numerical(
        "kernel matrix is singular after maximum jitter".into(),
    ))
}

pub fn gp_fit(x: &[Vec<f64>], y: &[f64], config: &KernelConfig) -> Result<Surrogate> {
    if x.len() < 2 || x.len() != y.len() {
        return Err(Error::InvalidArgument(format!(
            "need >= 2 paired observations, got {} / {}",
            x.len(),
            y.len()
        )));
    }
    let dim = x[0].len();
    if x.iter().any(|p| p.len() != dim) || y.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument(
            "observations must share a dimension and be finite".into(),
        ));
    }
    let y_mean = y.iter().sum::<f64>() / y.len() as f64;
    let yc = DVector::from_iterator(y.len(), y.iter().map(|v| v - y_mean));

    let candidates: Vec<KernelParams> = match config {
        KernelConfig::Fixed(p) => {
            if p.length_scales.len() != dim {
                return Err(Error::shape(
                    "kernel",
                    "length scales",
                    dim,
                    p.length_scales.len(),
                ));
            }
            vec![p.clone()]
        }
        KernelConfig::Grid => {
            let signal_var = (yc.dot(&yc) / y.len() as f64).max(MIN_SIGNAL_VAR);
            let mut out = Vec::new();
            for combo in 0..LENGTH_SCALE_GRID.len().pow(dim as u32) {
                let mut c = combo;
                let length_scales = (0..dim)
                    .map(|_| {
                        let l = LENGTH_SCALE_GRID[c % LENGTH_SCALE_GRID.len()];
                        c /= LENGTH_SCALE_GRID.len();
                        l
                    })
                    .collect::<Vec<_>>();
                for &noise_var in &NOISE_GRID {
                    out.push(KernelParams {
                        length_scales: length_scales.clone(),
                        signal_var,
                        noise_var,
                    });
                }
            }
            out
        }
    };

    let mut best: Option<Surrogate> = None;
    let mut last_err = None;
    for params in candidates {
        match factorize(x, &yc, &params) {
            Ok((chol, alpha, jitter, lml)) => {
                if best
                    .as_ref()
                    .map_or(true, |b| lml > b.log_marginal_likelihood)
                {
                    best = Some(Surrogate {
                        params,
                        x: x.to_vec(),
                        y_mean,
                        jitter,
                        log_marginal_likelihood: lml,
                        chol,
                        alpha,
                    });
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    best.ok_or_else(|| last_err.expect("at least one candidate"))
}

impl Surrogate {
    /// Predictive mean and latent standard deviation at `x`.
    pub fn posterior(&self, x: &[f64]) -> (f64, f64) {
        let ks =
            DVector::from_iterator(self.x.len(), self.x.iter().map(|p| self.params.eval(p, x)));
        let mean = self.y_mean + ks.dot(&self.alpha);
        let v = self
            .chol
            .l()
            .solve_lower_triangular(&ks)
            .expect("non-singular factor");
        let var = (self.params.eval(x, x) - v.dot(&v)).max(0.0);
        (mean, var.sqrt())
    }
}
