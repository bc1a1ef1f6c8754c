use super::Tensor;
use crate::error::{Error, Result};

/// Mean absolute error and its gradient with respect to `predicted`.
///
/// The subgradient at exact ties is zero.
pub fn mae_loss(predicted: &Tensor, target: &Tensor) -> Result<(f64, Tensor)> {
    if predicted.shape() != target.shape() {
        return Err(Error::config(format!(
            "mae_loss shape mismatch: {:?} vs {:?}",
            predicted.shape(),
            target.shape()
        )));
    }
    let n = predicted.len() as f64;
    let mut sum = 0.0;
    let grad: Vec<f64> = predicted
        .data()
        .iter()
        .zip(target.data())
        .map(|(p, t)| {
            let d = p - t;
            sum += d.abs();
            if d > 0.0 {
                1.0 / n
            } else if d < 0.0 {
                -1.0 / n
            } else {
                0.0
            }
        })
        .collect();
    let grad = Tensor::new(predicted.shape().to_vec(), grad)?;
    Ok((sum / n, grad))
}
