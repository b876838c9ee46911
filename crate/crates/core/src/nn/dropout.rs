//! Inverted dropout: survivors are scaled by 1/(1-p) at train time so the
//! eval forward pass is a pure identity.

use super::NnError;
use crate::rng::SeededRng;
use crate::tensor::{Scalar, Tensor};

#[derive(Clone, Copy, Debug)]
pub struct Dropout {
    pub p: f64,
}

impl Dropout {
    pub fn new(p: f64) -> Result<Self, NnError> {
        if !(0.0..1.0).contains(&p) {
            return Err(NnError::BadDropoutP(p));
        }
        Ok(Dropout { p })
    }

    /// Train-mode pass; returns the output and the mask (0 or 1/(1-p)) that
    /// the backward pass multiplies by.
    pub fn forward_train<S: Scalar>(
        &self,
        x: &Tensor<S>,
        rng: &mut SeededRng,
    ) -> (Tensor<S>, Vec<S>) {
        if self.p == 0.0 {
            return (x.clone(), vec![S::ONE; x.len()]);
        }
        let keep = S::from_f64(1.0 / (1.0 - self.p));
        let mask: Vec<S> = (0..x.len())
            .map(|_| {
                if rng.uniform() < self.p {
                    S::ZERO
                } else {
                    keep
                }
            })
            .collect();
        let data = x
            .data()
            .iter()
            .zip(&mask)
            .map(|(&v, &m)| v * m)
            .collect();
        (
            Tensor::from_vec_unchecked(x.shape().to_vec(), data),
            mask,
        )
    }
}
