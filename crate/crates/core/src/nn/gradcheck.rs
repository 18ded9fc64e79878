//! Central finite-difference gradient checking.

use super::tensor::Tensor;
use crate::error::{Error, Result};

/// A scalar function of a list of parameter tensors with an analytic gradient.
pub trait Objective {
    fn loss(&mut self, params: &[Tensor]) -> Result<f64>;
    fn gradient(&mut self, params: &[Tensor]) -> Result<Vec<Tensor>>;
}

/// Adapts a pair of closures to [`Objective`].
pub struct FnObjective<L, G> {
    pub loss: L,
    pub gradient: G,
}

impl<L, G> Objective for FnObjective<L, G>
where
    L: FnMut(&[Tensor]) -> Result<f64>,
    G: FnMut(&[Tensor]) -> Result<Vec<Tensor>>,
{
    fn loss(&mut self, params: &[Tensor]) -> Result<f64> {
        (self.loss)(params)
    }

    fn gradient(&mut self, params: &[Tensor]) -> Result<Vec<Tensor>> {
        (self.gradient)(params)
    }
}

/// Largest elementwise `|a − n| / max(|a|, |n|, 1e-8)` between the analytic
/// gradient `a` and the central difference `n = (f(w+ε) − f(w−ε)) / 2ε`.
pub fn grad_check<O: Objective + ?Sized>(objective: &mut O, params: &[Tensor], epsilon: f64) -> Result<f64> {
    if !(1e-7..=1e-3).contains(&epsilon) {
        return Err(Error::invalid(format!("epsilon {epsilon} outside [1e-7, 1e-3]")));
    }
    let analytic = objective.gradient(params)?;
    if analytic.len() != params.len() {
        return Err(Error::shape("gradient count differs from parameter count"));
    }
    for (a, p) in analytic.iter().zip(params) {
        a.expect_shape(p.shape())?;
    }
    let mut work = params.to_vec();
    let mut worst = 0.0f64;
    for ti in 0..work.len() {
        for ei in 0..work[ti].len() {
            let orig = work[ti].data()[ei];
            work[ti].data_mut()[ei] = orig + epsilon;
            let up = objective.loss(&work)?;
            work[ti].data_mut()[ei] = orig - epsilon;
            let down = objective.loss(&work)?;
            work[ti].data_mut()[ei] = orig;
            if !up.is_finite() || !down.is_finite() {
                return Err(Error::Numeric(format!(
                    "non-finite loss perturbing tensor {ti} element {ei}"
                )));
            }
            let numeric = (up - down) / (2.0 * epsilon);
            let a = analytic[ti].data()[ei];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
            worst = worst.max(rel);
        }
    }
    Ok(worst)
}
