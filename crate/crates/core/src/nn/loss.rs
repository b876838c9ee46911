//! Mean squared error with its gradient.

use super::NnError;
use crate::tensor::{Scalar, Tensor};

/// Returns `(loss, d loss / d pred)` where the loss is the mean of squared
/// differences over every element and the gradient is `2 (pred - target) / n`.
/// A non-finite loss is a hard error: it is the cheap, always-on detector
/// for diverged training or corrupt inputs.
pub fn mse_loss<S: Scalar>(
    pred: &Tensor<S>,
    target: &Tensor<S>,
) -> Result<(f64, Tensor<S>), NnError> {
    if pred.shape() != target.shape() {
        return Err(NnError::ShapeMismatch {
            a: pred.shape().to_vec(),
            b: target.shape().to_vec(),
        });
    }
    let n = pred.len() as f64;
    let mut acc = 0.0f64;
    let scale = S::from_f64(2.0 / n);
    let grad: Vec<S> = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(&p, &t)| {
            let d = p - t;
            acc += d.to_f64() * d.to_f64();
            d * scale
        })
        .collect();
    let loss = acc / n;
    if !loss.is_finite() {
        return Err(NnError::NonFiniteLoss(loss));
    }
    Ok((
        loss,
        Tensor::from_vec_unchecked(pred.shape().to_vec(), grad),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_when_equal() {
        let a = Tensor::from_vec(vec![3], vec![0.2, -0.7, 1.5]).unwrap();
        let (loss, grad) = mse_loss(&a, &a).unwrap();
        assert_eq!(loss, 0.0);
        assert!(grad.data().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn hand_computation() {
        let p = Tensor::from_vec(vec![2], vec![0.0, 0.0]).unwrap();
        let t = Tensor::from_vec(vec![2], vec![1.0, 1.0]).unwrap();
        let (loss, grad) = mse_loss(&p, &t).unwrap();
        assert_eq!(loss, 1.0);
        // 2 * (0 - 1) / 2 = -1 per element.
        assert_eq!(grad.data(), &[-1.0, -1.0]);
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let p = Tensor::zeros(&[2, 2]);
        let t = Tensor::zeros(&[4]);
        assert!(matches!(
            mse_loss::<f64>(&p, &t),
            Err(NnError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn gradient_matches_central_finite_difference() {
        let p0 = vec![0.3, -0.9, 2.1, 0.0];
        let t = Tensor::from_vec(vec![4], vec![1.0, -1.0, 2.0, 0.5]).unwrap();
        let (_, grad) = mse_loss(&Tensor::from_vec(vec![4], p0.clone()).unwrap(), &t).unwrap();
        let eps = 1e-6;
        for i in 0..4 {
            let mut plus = p0.clone();
            plus[i] += eps;
            let mut minus = p0.clone();
            minus[i] -= eps;
            let (lp, _) = mse_loss(&Tensor::from_vec(vec![4], plus).unwrap(), &t).unwrap();
            let (lm, _) = mse_loss(&Tensor::from_vec(vec![4], minus).unwrap(), &t).unwrap();
            let numeric = (lp - lm) / (2.0 * eps);
            let analytic = grad.data()[i];
            assert!(
                (numeric - analytic).abs() / analytic.abs().max(1e-6) < 1e-6,
                "coord {i}: numeric {numeric} vs analytic {analytic}"
            );
        }
    }
}
