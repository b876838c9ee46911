//! Same-size 2-D convolution via im2col + GEMM.

use super::{NnError, Workspace};
use crate::tensor::{Scalar, Tensor};

/// Stride-1 convolution with zero padding `(k-1)/2`, so spatial size is
/// preserved. Weights are `(out_channels, in_channels, k, k)` row-major,
/// which doubles as the `(out_channels, in_channels*k*k)` GEMM operand.
pub struct Conv2d<S> {
    pub weights: Tensor<S>,
    pub biases: Vec<S>,
    pub padding: usize,
    /// Per-layer learning-rate multiplier; 0.1 for transplanted layers.
    pub lr_scale: f64,
}

impl<S: Scalar> Conv2d<S> {
    pub fn new(weights: Tensor<S>, biases: Vec<S>, padding: usize) -> Result<Self, NnError> {
        let shape = weights.shape();
        if shape.len() != 4 || shape[2] != shape[3] || shape[2] % 2 == 0 {
            let (kh, kw) = if shape.len() == 4 {
                (shape[2], shape[3])
            } else {
                (0, 0)
            };
            return Err(NnError::BadKernel(kh, kw));
        }
        if biases.len() != shape[0] {
            return Err(NnError::DimMismatch {
                expected: shape[0],
                got: biases.len(),
            });
        }
        Ok(Conv2d {
            weights,
            biases,
            padding,
            lr_scale: 1.0,
        })
    }

    pub fn out_channels(&self) -> usize {
        self.weights.shape()[0]
    }

    pub fn in_channels(&self) -> usize {
        self.weights.shape()[1]
    }

    pub fn kernel(&self) -> usize {
        self.weights.shape()[2]
    }

    fn check_input(&self, x: &Tensor<S>) -> Result<(usize, usize, usize), NnError> {
        let shape = x.shape();
        if shape.len() != 4 {
            return Err(NnError::BadRank {
                expected: 4,
                got: shape.to_vec(),
            });
        }
        if shape[1] != self.in_channels() {
            return Err(NnError::ChannelMismatch {
                expected: self.in_channels(),
                got: shape[1],
            });
        }
        Ok((shape[0], shape[2], shape[3]))
    }

    /// `(B, C_in, H, W) -> (B, C_out, H, W)`; linear in input and weights.
    pub fn forward(&self, x: &Tensor<S>, ws: &mut Workspace<S>) -> Result<Tensor<S>, NnError> {
        let (batch, h, w) = self.check_input(x)?;
        let (c_in, c_out, k) = (self.in_channels(), self.out_channels(), self.kernel());
        let hw = h * w;
        let col_rows = c_in * k * k;
        ws.col.resize(col_rows * hw, S::ZERO);

        let mut out = vec![S::ZERO; batch * c_out * hw];
        let in_stride = c_in * hw;
        let out_stride = c_out * hw;
        for b in 0..batch {
            let xb = &x.data()[b * in_stride..(b + 1) * in_stride];
            im2col(xb, c_in, h, w, k, self.padding, &mut ws.col);
            let ob = &mut out[b * out_stride..(b + 1) * out_stride];
            S::gemm(
                c_out,
                col_rows,
                hw,
                S::ONE,
                self.weights.data(),
                false,
                &ws.col,
                false,
                S::ZERO,
                ob,
            );
            for (c, row) in ob.chunks_exact_mut(hw).enumerate() {
                let bias = self.biases[c];
                for v in row {
                    *v += bias;
                }
            }
        }
        Ok(Tensor::from_vec_unchecked(
            vec![batch, c_out, h, w],
            out,
        ))
    }

    /// Gradients w.r.t. input, weights and biases. The batch loop accumulates
    /// sequentially so results are bit-reproducible.
    pub fn backward(
        &self,
        x: &Tensor<S>,
        grad_out: &Tensor<S>,
        ws: &mut Workspace<S>,
    ) -> Result<(Tensor<S>, Tensor<S>, Vec<S>), NnError> {
        let (batch, h, w) = self.check_input(x)?;
        let (c_in, c_out, k) = (self.in_channels(), self.out_channels(), self.kernel());
        let hw = h * w;
        let col_rows = c_in * k * k;
        ws.col.resize(col_rows * hw, S::ZERO);
        ws.col2.resize(col_rows * hw, S::ZERO);

        let mut grad_w = Tensor::zeros(self.weights.shape());
        let mut grad_b = vec![S::ZERO; c_out];
        let mut grad_x = vec![S::ZERO; batch * c_in * hw];
        let in_stride = c_in * hw;
        let out_stride = c_out * hw;
        for b in 0..batch {
            let xb = &x.data()[b * in_stride..(b + 1) * in_stride];
            let gb = &grad_out.data()[b * out_stride..(b + 1) * out_stride];

            im2col(xb, c_in, h, w, k, self.padding, &mut ws.col);
            // dW += g_b * col^T
            S::gemm(
                c_out,
                hw,
                col_rows,
                S::ONE,
                gb,
                false,
                &ws.col,
                true,
                S::ONE,
                grad_w.data_mut(),
            );
            for (c, row) in gb.chunks_exact(hw).enumerate() {
                let mut acc = S::ZERO;
                for &v in row {
                    acc += v;
                }
                grad_b[c] += acc;
            }
            // dcol = W^T * g_b, then fold back into the input gradient.
            S::gemm(
                col_rows,
                c_out,
                hw,
                S::ONE,
                self.weights.data(),
                true,
                gb,
                false,
                S::ZERO,
                &mut ws.col2,
            );
            col2im(
                &ws.col2,
                c_in,
                h,
                w,
                k,
                self.padding,
                &mut grad_x[b * in_stride..(b + 1) * in_stride],
            );
        }
        Ok((
            Tensor::from_vec_unchecked(vec![batch, c_in, h, w], grad_x),
            grad_w,
            grad_b,
        ))
    }
}

/// Unfolds `(C, H, W)` into a `(C*k*k, H*W)` patch matrix with zero padding.
/// Row `c*k*k + ki*k + kj` holds the input shifted by `(ki-pad, kj-pad)`.
fn im2col<S: Scalar>(x: &[S], c_in: usize, h: usize, w: usize, k: usize, pad: usize, col: &mut [S]) {
    let hw = h * w;
    for c in 0..c_in {
        let chan = &x[c * hw..(c + 1) * hw];
        for ki in 0..k {
            for kj in 0..k {
                let row = &mut col[((c * k + ki) * k + kj) * hw..((c * k + ki) * k + kj + 1) * hw];
                // Horizontal shift and the clipped copy range it implies.
                let dj = kj as isize - pad as isize;
                let x0 = (-dj).max(0) as usize;
                let x1 = (w as isize - dj.max(0)) as usize;
                for y in 0..h {
                    let sy = y as isize + ki as isize - pad as isize;
                    let dst = &mut row[y * w..(y + 1) * w];
                    if sy < 0 || sy >= h as isize {
                        dst.fill(S::ZERO);
                        continue;
                    }
                    let src = &chan[sy as usize * w..(sy as usize + 1) * w];
                    dst[..x0].fill(S::ZERO);
                    dst[x1..].fill(S::ZERO);
                    for xo in x0..x1 {
                        dst[xo] = src[(xo as isize + dj) as usize];
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatter-adds a patch-matrix gradient back onto the
/// `(C, H, W)` input gradient.
fn col2im<S: Scalar>(
    col: &[S],
    c_in: usize,
    h: usize,
    w: usize,
    k: usize,
    pad: usize,
    dx: &mut [S],
) {
    let hw = h * w;
    for c in 0..c_in {
        let chan = &mut dx[c * hw..(c + 1) * hw];
        for ki in 0..k {
            for kj in 0..k {
                let row = &col[((c * k + ki) * k + kj) * hw..((c * k + ki) * k + kj + 1) * hw];
                let dj = kj as isize - pad as isize;
                let x0 = (-dj).max(0) as usize;
                let x1 = (w as isize - dj.max(0)) as usize;
                for y in 0..h {
                    let sy = y as isize + ki as isize - pad as isize;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let src = &row[y * w..(y + 1) * w];
                    let dst = &mut chan[sy as usize * w..(sy as usize + 1) * w];
                    for xo in x0..x1 {
                        dst[(xo as isize + dj) as usize] += src[xo];
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn conv(
        out_c: usize,
        in_c: usize,
        k: usize,
        wdata: Vec<f64>,
        biases: Vec<f64>,
    ) -> Conv2d<f64> {
        Conv2d::new(
            Tensor::from_vec(vec![out_c, in_c, k, k], wdata).unwrap(),
            biases,
            (k - 1) / 2,
        )
        .unwrap()
    }

    #[test]
    fn identity_one_by_one_kernel() {
        let c = conv(1, 1, 1, vec![1.0], vec![0.0]);
        let x = Tensor::from_vec(vec![1, 1, 2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let y = c.forward(&x, &mut Workspace::new()).unwrap();
        assert_eq!(y.shape(), x.shape());
        assert_eq!(y.data(), x.data());
    }

    #[test]
    fn all_ones_three_by_three() {
        // 3x3 ones input, 3x3 ones filter, padding 1: center sums the full
        // window (9), corners see a 2x2 neighbourhood (4).
        let c = conv(1, 1, 3, vec![1.0; 9], vec![0.0]);
        let x = Tensor::from_vec(vec![1, 1, 3, 3], vec![1.0; 9]).unwrap();
        let y = c.forward(&x, &mut Workspace::new()).unwrap();
        let d = y.data();
        assert_eq!(d[4], 9.0);
        assert_eq!(d[0], 4.0);
        assert_eq!(d[2], 4.0);
        assert_eq!(d[6], 4.0);
        assert_eq!(d[8], 4.0);
        assert_eq!(d[1], 6.0);
    }

    #[test]
    fn preserves_spatial_size_with_64_filters() {
        let n = 64 * 1 * 5 * 5;
        let c = conv(64, 1, 5, vec![0.01; n], vec![0.0; 64]);
        let x = Tensor::zeros(&[1, 1, 96, 96]);
        let y = c.forward(&x, &mut Workspace::new()).unwrap();
        assert_eq!(y.shape(), &[1, 64, 96, 96]);
    }

    #[test]
    fn channel_mismatch_is_an_error() {
        let c = conv(1, 2, 3, vec![1.0; 18], vec![0.0]);
        let x = Tensor::zeros(&[1, 1, 4, 4]);
        let err = c.forward(&x, &mut Workspace::new()).unwrap_err();
        assert_eq!(
            err,
            NnError::ChannelMismatch {
                expected: 2,
                got: 1
            }
        );
    }

    #[test]
    fn even_kernel_rejected() {
        let w = Tensor::from_vec(vec![1, 1, 2, 2], vec![1.0; 4]).unwrap();
        assert!(matches!(
            Conv2d::new(w, vec![0.0], 0),
            Err(NnError::BadKernel(2, 2))
        ));
    }

    #[test]
    fn linear_in_input() {
        let c = conv(
            2,
            1,
            3,
            vec![0.3, -0.2, 0.5, 0.1, 0.9, -0.4, 0.0, 0.2, -0.6, 1.0, 0.5, 0.25, -0.125, 0.0,
                 0.75, -0.3, 0.6, 0.05],
            vec![0.0, 0.0],
        );
        let mut ws = Workspace::new();
        let xa: Vec<f64> = (0..16).map(|i| (i as f64) * 0.1 - 0.4).collect();
        let xb: Vec<f64> = (0..16).map(|i| ((i * 7 % 16) as f64) * 0.05).collect();
        let a = Tensor::from_vec(vec![1, 1, 4, 4], xa.clone()).unwrap();
        let b = Tensor::from_vec(vec![1, 1, 4, 4], xb.clone()).unwrap();
        let mixed: Vec<f64> = xa.iter().zip(&xb).map(|(&u, &v)| 2.0 * u - 3.0 * v).collect();
        let m = Tensor::from_vec(vec![1, 1, 4, 4], mixed).unwrap();
        let fa = c.forward(&a, &mut ws).unwrap();
        let fb = c.forward(&b, &mut ws).unwrap();
        let fm = c.forward(&m, &mut ws).unwrap();
        for i in 0..fm.len() {
            let expect = 2.0 * fa.data()[i] - 3.0 * fb.data()[i];
            assert!((fm.data()[i] - expect).abs() < 1e-10);
        }
    }
}
