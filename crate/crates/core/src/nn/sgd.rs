//! Stochastic gradient descent with momentum, weight decay, and per-layer
//! learning-rate scaling.

use super::{Layer, Network, ParamGrads};
use crate::tensor::{Scalar, Tensor};

/// Optimizer settings. `base_lr` is the phase learning rate (0.01 for
/// pretraining and freshly initialized layers); the effective rate of a
/// layer is `base_lr * layer.lr_scale`, which is how transplanted layers
/// train 10x slower than fresh ones.
#[derive(Clone, Copy, Debug)]
pub struct SgdConfig {
    pub base_lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
}

impl Default for SgdConfig {
    fn default() -> Self {
        SgdConfig {
            base_lr: 0.01,
            momentum: 0.9,
            weight_decay: 5e-4,
            batch_size: 128,
        }
    }
}

/// Momentum buffers aligned with the network layer list.
pub struct Velocity<S> {
    layers: Vec<Option<(Tensor<S>, Vec<S>)>>,
}

impl<S: Scalar> Velocity<S> {
    pub fn zeros_like(net: &Network<S>) -> Self {
        let layers = net
            .layers
            .iter()
            .map(|l| match l {
                Layer::Conv(c) => Some((Tensor::zeros(c.weights.shape()), vec![S::ZERO; c.biases.len()])),
                Layer::Fc(f) => Some((Tensor::zeros(f.weights.shape()), vec![S::ZERO; f.biases.len()])),
                _ => None,
            })
            .collect();
        Velocity { layers }
    }
}

/// One update:
/// `v <- momentum*v - lr_eff*(grad + weight_decay*w)`, `w <- w + v`,
/// with `lr_eff = phase_lr * layer.lr_scale`. Weight decay is not applied
/// to biases.
pub fn sgd_step<S: Scalar>(
    net: &mut Network<S>,
    grads: &ParamGrads<S>,
    vel: &mut Velocity<S>,
    cfg: &SgdConfig,
    phase_lr: f64,
) {
    let momentum = S::from_f64(cfg.momentum);
    let wd = S::from_f64(cfg.weight_decay);
    for (i, layer) in net.layers.iter_mut().enumerate() {
        let Some((gw, gb)) = &grads.layers[i] else {
            continue;
        };
        let (weights, biases, lr_scale) = match layer {
            Layer::Conv(c) => (&mut c.weights, &mut c.biases, c.lr_scale),
            Layer::Fc(f) => (&mut f.weights, &mut f.biases, f.lr_scale),
            _ => continue,
        };
        let (vw, vb) = vel.layers[i].as_mut().expect("velocity aligned with params");
        let lr = S::from_f64(phase_lr * lr_scale);
        for ((w, v), &g) in weights
            .data_mut()
            .iter_mut()
            .zip(vw.data_mut())
            .zip(gw.data())
        {
            *v = momentum * *v - lr * (g + wd * *w);
            *w += *v;
        }
        for ((b, v), &g) in biases.iter_mut().zip(vb.iter_mut()).zip(gb) {
            *v = momentum * *v - lr * g;
            *b += *v;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Fc;

    fn one_fc_net(w: f64) -> Network<f64> {
        Network::new(vec![Layer::Fc(
            Fc::new(Tensor::from_vec(vec![1, 1], vec![w]).unwrap(), vec![0.0]).unwrap(),
        )])
    }

    fn grads_of(g: f64) -> ParamGrads<f64> {
        ParamGrads {
            layers: vec![Some((
                Tensor::from_vec(vec![1, 1], vec![g]).unwrap(),
                vec![0.0],
            ))],
        }
    }

    fn weight(net: &Network<f64>) -> f64 {
        match &net.layers[0] {
            Layer::Fc(f) => f.weights.data()[0],
            _ => unreachable!(),
        }
    }

    #[test]
    fn plain_gradient_step() {
        // momentum=0, wd=0, lr=1: w decreases by exactly g.
        let mut net = one_fc_net(2.0);
        let mut vel = Velocity::zeros_like(&net);
        let cfg = SgdConfig {
            base_lr: 1.0,
            momentum: 0.0,
            weight_decay: 0.0,
            batch_size: 1,
        };
        sgd_step(&mut net, &grads_of(0.25), &mut vel, &cfg, 1.0);
        assert_eq!(weight(&net), 1.75);
    }

    #[test]
    fn zero_gradient_zero_velocity_is_a_fixed_point() {
        let mut net = one_fc_net(0.5);
        let mut vel = Velocity::zeros_like(&net);
        let cfg = SgdConfig {
            base_lr: 0.1,
            momentum: 0.9,
            weight_decay: 0.0,
            batch_size: 1,
        };
        sgd_step(&mut net, &grads_of(0.0), &mut vel, &cfg, 0.1);
        assert_eq!(weight(&net), 0.5);
    }

    #[test]
    fn momentum_two_step_recursion() {
        // Fixed gradient g, momentum 0.9, lr 0.1:
        // step 1: v = -0.1 g, dw1 = -0.1 g
        // step 2: v = 0.9*(-0.1 g) - 0.1 g = -0.19 g, dw2 = -0.1 g * 1.9
        let g = 0.4;
        let mut net = one_fc_net(1.0);
        let mut vel = Velocity::zeros_like(&net);
        let cfg = SgdConfig {
            base_lr: 0.1,
            momentum: 0.9,
            weight_decay: 0.0,
            batch_size: 1,
        };
        sgd_step(&mut net, &grads_of(g), &mut vel, &cfg, 0.1);
        let w1 = weight(&net);
        assert!((w1 - (1.0 - 0.1 * g)).abs() < 1e-15);
        sgd_step(&mut net, &grads_of(g), &mut vel, &cfg, 0.1);
        let dw2 = weight(&net) - w1;
        assert!((dw2 - (-0.1 * g * 1.9)).abs() < 1e-15, "dw2 {dw2}");
    }

    #[test]
    fn weight_decay_skips_biases() {
        let mut net = Network::new(vec![Layer::Fc(
            Fc::new(Tensor::from_vec(vec![1, 1], vec![1.0]).unwrap(), vec![1.0]).unwrap(),
        )]);
        let mut vel = Velocity::zeros_like(&net);
        let cfg = SgdConfig {
            base_lr: 0.5,
            momentum: 0.0,
            weight_decay: 0.1,
            batch_size: 1,
        };
        sgd_step(&mut net, &grads_of(0.0), &mut vel, &cfg, 0.5);
        let Layer::Fc(f) = &net.layers[0] else { unreachable!() };
        // Weight shrinks by lr*wd*w = 0.05; bias untouched.
        assert!((f.weights.data()[0] - 0.95).abs() < 1e-15);
        assert_eq!(f.biases[0], 1.0);
    }

    #[test]
    fn lr_scale_multiplies_phase_lr() {
        let mut net = one_fc_net(1.0);
        if let Layer::Fc(f) = &mut net.layers[0] {
            f.lr_scale = 0.1;
        }
        let mut vel = Velocity::zeros_like(&net);
        let cfg = SgdConfig {
            base_lr: 1.0,
            momentum: 0.0,
            weight_decay: 0.0,
            batch_size: 1,
        };
        sgd_step(&mut net, &grads_of(1.0), &mut vel, &cfg, 1.0);
        assert!((weight(&net) - 0.9).abs() < 1e-15);
    }
}
