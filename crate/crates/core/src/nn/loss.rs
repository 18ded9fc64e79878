use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Max-subtracted softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = out.iter().sum();
    for p in &mut out {
        *p /= sum;
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct CrossEntropy {
    pub loss: f64,
    pub probs: Tensor,
    pub grad_logits: Tensor,
}

pub fn softmax_cross_entropy(logits: &Tensor, label: usize) -> Result<CrossEntropy> {
    let k = logits.len();
    if k < 2 {
        return Err(Error::invalid("softmax needs at least two classes"));
    }
    if label >= k {
        return Err(Error::invalid(format!("label {label} out of range for {k} classes")));
    }
    let z = logits.data();
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = z.iter().map(|&v| (v - max).exp()).sum();
    // −ln p[label] in log-sum-exp form stays exact when p[label] rounds to 1.
    let loss = sum.ln() - (z[label] - max);
    let probs = softmax(z);
    let mut grad = probs.clone();
    grad[label] -= 1.0;
    Ok(CrossEntropy {
        loss,
        probs: Tensor::vector(probs),
        grad_logits: Tensor::vector(grad),
    })
}

/// Mean squared error and its gradient with respect to `pred`.
pub fn mse(pred: &[f64], target: &[f64]) -> (f64, Vec<f64>) {
    assert_eq!(pred.len(), target.len(), "mse length mismatch");
    let n = pred.len() as f64;
    let mut loss = 0.0;
    let grad = pred
        .iter()
        .zip(target)
        .map(|(p, t)| {
            let d = p - t;
            loss += d * d;
            2.0 * d / n
        })
        .collect();
    (loss / n, grad)
}
