use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Row-wise softmax of an `N x K` logit tensor (`K` channels, 1x1 spatial).
pub fn softmax(logits: &Tensor) -> Tensor {
    let k = logits.shape().sample_len();
    let mut out = logits.clone();
    out.clear_grad();
    for row in out.data_mut().chunks_mut(k.max(1)) {
        let max = row.iter().copied().fold(f32::NEG_INFINITY, f32::max);
        let mut sum = 0.0f64;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v as f64;
        }
        for v in row.iter_mut() {
            *v = (*v as f64 / sum) as f32;
        }
    }
    out
}

/// Mean negative log-likelihood and its gradient `(softmax - onehot) / N`.
pub fn softmax_cross_entropy(logits: &Tensor, labels: &[usize]) -> Result<(f32, Tensor)> {
    let s = logits.shape();
    let k = s.sample_len();
    if labels.len() != s.n {
        return Err(Error::shape("cross entropy", "labels", s.n, labels.len()));
    }
    if s.n == 0 {
        return Err(Error::InvalidArgument(
            "cross entropy over empty batch".into(),
        ));
    }
    if let Some((i, &l)) = labels.iter().enumerate().find(|(_, &l)| l >= k) {
        return Err(Error::InvalidArgument(format!(
            "label {l} at row {i} outside [0, {k})"
        )));
    }
    let mut loss = 0.0f64;
    let mut grad = Tensor::zeros(s);
    let inv_n = 1.0 / s.n as f64;
    for (n, &label) in labels.iter().enumerate() {
        let row = logits.sample(n);
        let max = row.iter().copied().fold(f32::NEG_INFINITY, f32::max) as f64;
        let sum: f64 = row.iter().map(|&v| (v as f64 - max).exp()).sum();
        let log_z = max + sum.ln();
        loss += log_z - row[label] as f64;
        let g = grad.sample_mut(n);
        for (j, gv) in g.iter_mut().enumerate() {
            let p = (row[j] as f64 - log_z).exp();
            let onehot = if j == label { 1.0 } else { 0.0 };
            *gv = ((p - onehot) * inv_n) as f32;
        }
    }
    Ok(((loss * inv_n) as f32, grad))
}
