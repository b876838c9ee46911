//! Gradient verification against central finite differences.
//!
//! Runs in eval dropout mode and expects f64: at 32 bits the finite
//! difference itself drowns in rounding noise.

use super::{Layer, Network, NnError, Workspace};
use crate::nn::loss::mse_loss;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    /// Number of coordinates compared.
    pub checked: usize,
}

/// Compares every analytic parameter gradient of `net` (or an evenly strided
/// sample of `max_per_layer` coordinates per parameter tensor, for large
/// networks) against `(L(w+eps) - L(w-eps)) / 2 eps` under the MSE loss.
///
/// Relative error uses `|a - n| / max(|a|, |n|, 1e-6)` so near-zero
/// gradients do not blow the ratio up.
pub fn grad_check(
    net: &mut Network<f64>,
    input: &Tensor<f64>,
    target: &Tensor<f64>,
    eps: f64,
    max_per_layer: Option<usize>,
) -> Result<GradCheckReport, NnError> {
    let mut ws = Workspace::new();
    let trace = net.forward_traced(input, None, &mut ws)?;
    let (_, grad_loss) = mse_loss(trace.output(), target)?;
    let (_, grads) = net.backward(&trace, grad_loss, &mut ws)?;

    let mut max_rel = 0.0f64;
    let mut checked = 0usize;
    for li in 0..net.layers.len() {
        let Some((gw, gb)) = &grads.layers[li] else {
            continue;
        };
        let analytic_w = gw.data().to_vec();
        let analytic_b = gb.clone();
        for (is_bias, analytic) in [(false, analytic_w), (true, analytic_b)] {
            for ci in sample_indices(analytic.len(), max_per_layer) {
                let numeric = central_diff(net, li, is_bias, ci, input, target, eps, &mut ws)?;
                let a = analytic[ci];
                let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
                if rel > max_rel {
                    max_rel = rel;
                }
                checked += 1;
            }
        }
    }
    Ok(GradCheckReport {
        max_rel_err: max_rel,
        checked,
    })
}

fn sample_indices(len: usize, max: Option<usize>) -> Vec<usize> {
    match max {
        Some(m) if m < len => {
            // Evenly strided deterministic sample.
            (0..m).map(|j| j * len / m).collect()
        }
        _ => (0..len).collect(),
    }
}

#[allow(clippy::too_many_arguments)]
fn central_diff(
    net: &mut Network<f64>,
    layer: usize,
    is_bias: bool,
    coord: usize,
    input: &Tensor<f64>,
    target: &Tensor<f64>,
    eps: f64,
    ws: &mut Workspace<f64>,
) -> Result<f64, NnError> {
    let original = perturb(net, layer, is_bias, coord, eps);
    let out_plus = net.forward_eval(input, ws)?;
    let (loss_plus, _) = mse_loss(&out_plus, target)?;
    set_param(net, layer, is_bias, coord, original - eps);
    let out_minus = net.forward_eval(input, ws)?;
    let (loss_minus, _) = mse_loss(&out_minus, target)?;
    set_param(net, layer, is_bias, coord, original);
    Ok((loss_plus - loss_minus) / (2.0 * eps))
}

fn perturb(net: &mut Network<f64>, layer: usize, is_bias: bool, coord: usize, eps: f64) -> f64 {
    let slot = param_slot(net, layer, is_bias, coord);
    let original = *slot;
    *slot = original + eps;
    original
}

fn set_param(net: &mut Network<f64>, layer: usize, is_bias: bool, coord: usize, value: f64) {
    *param_slot(net, layer, is_bias, coord) = value;
}

fn param_slot(net: &mut Network<f64>, layer: usize, is_bias: bool, coord: usize) -> &mut f64 {
    match &mut net.layers[layer] {
        Layer::Conv(c) => {
            if is_bias {
                &mut c.biases[coord]
            } else {
                &mut c.weights.data_mut()[coord]
            }
        }
        Layer::Fc(f) => {
            if is_bias {
                &mut f.biases[coord]
            } else {
                &mut f.weights.data_mut()[coord]
            }
        }
        _ => panic!("layer {layer} has no parameters"),
    }
}
