//! Fully-connected layer.

use super::NnError;
use crate::tensor::{Scalar, Tensor};

/// Affine map `y = W x + b` with weights `(out_units, in_units)`.
pub struct Fc<S> {
    pub weights: Tensor<S>,
    pub biases: Vec<S>,
    pub lr_scale: f64,
}

impl<S: Scalar> Fc<S> {
    pub fn new(weights: Tensor<S>, biases: Vec<S>) -> Result<Self, NnError> {
        let shape = weights.shape();
        if shape.len() != 2 {
            return Err(NnError::BadRank {
                expected: 2,
                got: shape.to_vec(),
            });
        }
        if biases.len() != shape[0] {
            return Err(NnError::DimMismatch {
                expected: shape[0],
                got: biases.len(),
            });
        }
        Ok(Fc {
            weights,
            biases,
            lr_scale: 1.0,
        })
    }

    pub fn out_units(&self) -> usize {
        self.weights.shape()[0]
    }

    pub fn in_units(&self) -> usize {
        self.weights.shape()[1]
    }

    fn check_input(&self, x: &Tensor<S>) -> Result<usize, NnError> {
        let shape = x.shape();
        if shape.len() != 2 {
            return Err(NnError::BadRank {
                expected: 2,
                got: shape.to_vec(),
            });
        }
        if shape[1] != self.in_units() {
            return Err(NnError::DimMismatch {
                expected: self.in_units(),
                got: shape[1],
            });
        }
        Ok(shape[0])
    }

    /// `(B, N) -> (B, M)`.
    pub fn forward(&self, x: &Tensor<S>) -> Result<Tensor<S>, NnError> {
        let batch = self.check_input(x)?;
        let (m, n) = (self.out_units(), self.in_units());
        let mut out = vec![S::ZERO; batch * m];
        // out = x * W^T
        S::gemm(
            batch,
            n,
            m,
            S::ONE,
            x.data(),
            false,
            self.weights.data(),
            true,
            S::ZERO,
            &mut out,
        );
        for row in out.chunks_exact_mut(m) {
            for (v, &b) in row.iter_mut().zip(&self.biases) {
                *v += b;
            }
        }
        Ok(Tensor::from_vec_unchecked(vec![batch, m], out))
    }

    pub fn backward(
        &self,
        x: &Tensor<S>,
        grad_out: &Tensor<S>,
    ) -> Result<(Tensor<S>, Tensor<S>, Vec<S>), NnError> {
        let batch = self.check_input(x)?;
        let (m, n) = (self.out_units(), self.in_units());
        debug_assert_eq!(grad_out.shape(), &[batch, m]);

        // dW = g^T * x
        let mut grad_w = vec![S::ZERO; m * n];
        S::gemm(
            m,
            batch,
            n,
            S::ONE,
            grad_out.data(),
            true,
            x.data(),
            false,
            S::ZERO,
            &mut grad_w,
        );
        // db = column sums of g
        let mut grad_b = vec![S::ZERO; m];
        for row in grad_out.data().chunks_exact(m) {
            for (acc, &g) in grad_b.iter_mut().zip(row) {
                *acc += g;
            }
        }
        // dx = g * W
        let mut grad_x = vec![S::ZERO; batch * n];
        S::gemm(
            batch,
            m,
            n,
            S::ONE,
            grad_out.data(),
            false,
            self.weights.data(),
            false,
            S::ZERO,
            &mut grad_x,
        );
        Ok((
            Tensor::from_vec_unchecked(vec![batch, n], grad_x),
            Tensor::from_vec_unchecked(vec![m, n], grad_w),
            grad_b,
        ))
    }
}
