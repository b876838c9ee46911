//! Max pooling over disjoint windows: 2x2 and quadrant variants.

use super::NnError;
use crate::tensor::{Scalar, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PoolKind {
    Max2x2,
    Quadrant,
}

/// Output spatial size for a pooling kind applied to an `h x w` map.
pub fn block_max_pool_shape(kind: PoolKind, h: usize, w: usize) -> Result<(usize, usize), NnError> {
    let (wh, ww) = window(kind, h, w)?;
    Ok((h / wh, w / ww))
}

fn window(kind: PoolKind, h: usize, w: usize) -> Result<(usize, usize), NnError> {
    let (wh, ww) = match kind {
        PoolKind::Max2x2 => (2, 2),
        PoolKind::Quadrant => (h / 2, w / 2),
    };
    if wh == 0 || ww == 0 || h % 2 != 0 || w % 2 != 0 {
        return Err(NnError::BadPoolExtent {
            extent: if h % 2 != 0 || h / 2 == 0 { h } else { w },
            window: 2,
        });
    }
    debug_assert!(h % wh == 0 && w % ww == 0);
    Ok((wh, ww))
}

/// Max over each disjoint window; also returns the flat argmax index (into
/// the input buffer) per output element. Ties go to the first element in
/// row-major window order, which is the index the backward pass routes the
/// gradient to.
pub fn forward<S: Scalar>(x: &Tensor<S>, kind: PoolKind) -> Result<(Tensor<S>, Vec<u32>), NnError> {
    let shape = x.shape();
    if shape.len() != 4 {
        return Err(NnError::BadRank {
            expected: 4,
            got: shape.to_vec(),
        });
    }
    let (batch, chans, h, w) = (shape[0], shape[1], shape[2], shape[3]);
    let (wh, ww) = window(kind, h, w)?;
    let (oh, ow) = (h / wh, w / ww);
    debug_assert!(x.len() < u32::MAX as usize);

    let data = x.data();
    let mut out = Vec::with_capacity(batch * chans * oh * ow);
    let mut argmax = Vec::with_capacity(out.capacity());
    for bc in 0..batch * chans {
        let base = bc * h * w;
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best_idx = base + oy * wh * w + ox * ww;
                let mut best = data[best_idx];
                for dy in 0..wh {
                    for dx in 0..ww {
                        let idx = base + (oy * wh + dy) * w + ox * ww + dx;
                        if data[idx] > best {
                            best = data[idx];
                            best_idx = idx;
                        }
                    }
                }
                out.push(best);
                argmax.push(best_idx as u32);
            }
        }
    }
    Ok((
        Tensor::from_vec_unchecked(vec![batch, chans, oh, ow], out),
        argmax,
    ))
}

/// Routes each output gradient to its recorded argmax position.
pub fn backward<S: Scalar>(input_shape: &[usize], argmax: &[u32], grad_out: &Tensor<S>) -> Tensor<S> {
    let mut dx = vec![S::ZERO; input_shape.iter().product()];
    for (&idx, &g) in argmax.iter().zip(grad_out.data()) {
        dx[idx as usize] += g;
    }
    Tensor::from_vec_unchecked(input_shape.to_vec(), dx)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_window_max_of_four() {
        let x = Tensor::from_vec(vec![1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let (y, idx) = forward(&x, PoolKind::Max2x2).unwrap();
        assert_eq!(y.data(), &[4.0]);
        assert_eq!(idx, vec![3]);
    }

    #[test]
    fn halves_spatial_extent() {
        let x = Tensor::<f64>::zeros(&[2, 3, 96, 96]);
        let (y, _) = forward(&x, PoolKind::Max2x2).unwrap();
        assert_eq!(y.shape(), &[2, 3, 48, 48]);
    }

    #[test]
    fn constant_input_stays_constant() {
        let x = Tensor::<f64>::filled(&[1, 1, 8, 8], 0.7);
        let (m, _) = forward(&x, PoolKind::Max2x2).unwrap();
        assert!(m.data().iter().all(|&v| v == 0.7));
        assert_eq!(m.len(), 16);
        let (q, _) = forward(&x, PoolKind::Quadrant).unwrap();
        assert!(q.data().iter().all(|&v| v == 0.7));
        assert_eq!(q.shape(), &[1, 1, 2, 2]);
    }

    #[test]
    fn quadrant_equals_bruteforce_quadrant_max() {
        // 4x4 map with distinct values: each output is the max of its 2x2
        // quadrant, checked against a brute-force scan.
        let vals: Vec<f64> = vec![
            3.0, 7.0, 1.0, 9.0, //
            2.0, 5.0, 8.0, 4.0, //
            11.0, 0.0, 6.0, 13.0, //
            10.0, 12.0, 15.0, 14.0,
        ];
        let x = Tensor::from_vec(vec![1, 1, 4, 4], vals.clone()).unwrap();
        let (y, _) = forward(&x, PoolKind::Quadrant).unwrap();
        let brute = |ys: usize, xs: usize| -> f64 {
            let mut best = f64::NEG_INFINITY;
            for dy in 0..2 {
                for dx in 0..2 {
                    best = best.max(vals[(ys + dy) * 4 + xs + dx]);
                }
            }
            best
        };
        assert_eq!(
            y.data(),
            &[brute(0, 0), brute(0, 2), brute(2, 0), brute(2, 2)]
        );
    }

    #[test]
    fn odd_extent_is_an_error() {
        let x = Tensor::<f64>::zeros(&[1, 1, 3, 4]);
        assert!(forward(&x, PoolKind::Max2x2).is_err());
        assert!(forward(&x, PoolKind::Quadrant).is_err());
    }

    #[test]
    fn ties_route_gradient_to_first_in_row_major_order() {
        let x = Tensor::from_vec(vec![1, 1, 2, 2], vec![5.0, 5.0, 5.0, 5.0]).unwrap();
        let (_, idx) = forward(&x, PoolKind::Max2x2).unwrap();
        assert_eq!(idx, vec![0]);
        let g = Tensor::from_vec(vec![1, 1, 1, 1], vec![2.5]).unwrap();
        let dx = backward(&[1, 1, 2, 2], &idx, &g);
        assert_eq!(dx.data(), &[2.5, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn window_permutation_invariance() {
        // Shuffling values inside one pooling window leaves the output alone.
        let a = Tensor::from_vec(vec![1, 1, 2, 2], vec![1.0, 9.0, 4.0, 2.0]).unwrap();
        let b = Tensor::from_vec(vec![1, 1, 2, 2], vec![9.0, 2.0, 1.0, 4.0]).unwrap();
        let (ya, _) = forward(&a, PoolKind::Max2x2).unwrap();
        let (yb, _) = forward(&b, PoolKind::Max2x2).unwrap();
        assert_eq!(ya.data(), yb.data());
    }
}
