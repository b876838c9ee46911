//! Finite-difference verification of every layer type's backward pass.
//!
//! Each case builds a small network containing the layer under test, drives
//! it with fixed pseudo-random data, and compares analytic parameter
//! gradients against central differences at 64-bit precision.

use emosr_core::nn::{grad_check, Conv2d, Dropout, Fc, Layer, Network};
use emosr_core::rng::SeededRng;
use emosr_core::tensor::Tensor;

fn rand_tensor(rng: &mut SeededRng, shape: &[usize], scale: f64) -> Tensor<f64> {
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| rng.gauss() * scale).collect();
    Tensor::from_vec(shape.to_vec(), data).unwrap()
}

fn conv(rng: &mut SeededRng, out_c: usize, in_c: usize, k: usize) -> Layer<f64> {
    let fan = (in_c * k * k) as f64;
    Layer::Conv(
        Conv2d::new(
            rand_tensor(rng, &[out_c, in_c, k, k], (2.0 / fan).sqrt()),
            (0..out_c).map(|_| rng.gauss() * 0.1).collect(),
            (k - 1) / 2,
        )
        .unwrap(),
    )
}

fn fc(rng: &mut SeededRng, out_u: usize, in_u: usize) -> Layer<f64> {
    Layer::Fc(
        Fc::new(
            rand_tensor(rng, &[out_u, in_u], (1.0 / in_u as f64).sqrt()),
            (0..out_u).map(|_| rng.gauss() * 0.1).collect(),
        )
        .unwrap(),
    )
}

fn check(net: &mut Network<f64>, in_shape: &[usize], out_shape: &[usize], tol: f64) {
    let mut rng = SeededRng::new(99);
    let input = rand_tensor(&mut rng, in_shape, 1.0);
    let target = rand_tensor(&mut rng, out_shape, 1.0);
    let report = grad_check(net, &input, &target, 1e-5, None).unwrap();
    assert!(
        report.max_rel_err < tol,
        "max relative error {} over {} coords",
        report.max_rel_err,
        report.checked
    );
}

#[test]
fn conv_layer_gradients() {
    let mut rng = SeededRng::new(1);
    let mut net = Network::new(vec![conv(&mut rng, 3, 2, 3)]);
    check(&mut net, &[2, 2, 6, 6], &[2, 3, 6, 6], 1e-4);
}

#[test]
fn conv_5x5_gradients() {
    let mut rng = SeededRng::new(2);
    let mut net = Network::new(vec![conv(&mut rng, 2, 1, 5)]);
    check(&mut net, &[1, 1, 8, 8], &[1, 2, 8, 8], 1e-4);
}

#[test]
fn fc_layer_gradients() {
    let mut rng = SeededRng::new(3);
    let mut net = Network::new(vec![fc(&mut rng, 5, 7)]);
    check(&mut net, &[3, 7], &[3, 5], 1e-4);
}

#[test]
fn relu_network_gradients_away_from_kinks() {
    // Bias offsets push pre-activations away from zero so the central
    // difference never straddles a kink.
    let mut rng = SeededRng::new(4);
    let mut net = Network::new(vec![fc(&mut rng, 6, 4), Layer::Relu, fc(&mut rng, 2, 6)]);
    check(&mut net, &[2, 4], &[2, 2], 1e-4);
}

#[test]
fn maxpool_network_gradients() {
    let mut rng = SeededRng::new(5);
    let mut net = Network::new(vec![conv(&mut rng, 2, 1, 3), Layer::MaxPool2x2]);
    check(&mut net, &[2, 1, 6, 6], &[2, 2, 3, 3], 1e-4);
}

#[test]
fn quadrant_pool_network_gradients() {
    let mut rng = SeededRng::new(6);
    let mut net = Network::new(vec![conv(&mut rng, 2, 1, 3), Layer::QuadrantPool]);
    check(&mut net, &[1, 1, 8, 8], &[1, 2, 2, 2], 1e-4);
}

#[test]
fn dropout_is_identity_under_grad_check() {
    // grad_check runs dropout in eval mode; gradients must flow unscaled.
    let mut rng = SeededRng::new(7);
    let mut net = Network::new(vec![
        fc(&mut rng, 6, 4),
        Layer::Relu,
        Layer::Dropout(Dropout::new(0.5).unwrap()),
        fc(&mut rng, 1, 6),
    ]);
    check(&mut net, &[2, 4], &[2, 1], 1e-4);
}

#[test]
fn flatten_pipeline_gradients() {
    let mut rng = SeededRng::new(8);
    let mut net = Network::new(vec![
        conv(&mut rng, 2, 1, 3),
        Layer::Relu,
        Layer::MaxPool2x2,
        Layer::Flatten,
        fc(&mut rng, 3, 2 * 3 * 3),
    ]);
    check(&mut net, &[2, 1, 6, 6], &[2, 3], 1e-4);
}

#[test]
fn tiny_two_layer_net_meets_spec_tolerance() {
    let mut rng = SeededRng::new(9);
    let mut net = Network::new(vec![fc(&mut rng, 4, 3), Layer::Relu, fc(&mut rng, 1, 4)]);
    check(&mut net, &[2, 3], &[2, 1], 1e-4);
}

#[test]
fn linear_net_agrees_to_1e8() {
    // Purely linear network under MSE: the loss is exactly quadratic, so the
    // central difference is exact up to rounding.
    let mut rng = SeededRng::new(10);
    let mut net = Network::new(vec![fc(&mut rng, 3, 5), fc(&mut rng, 2, 3)]);
    let input = rand_tensor(&mut rng, &[2, 5], 1.0);
    let target = rand_tensor(&mut rng, &[2, 2], 1.0);
    let report = grad_check(&mut net, &input, &target, 1e-5, None).unwrap();
    assert!(
        report.max_rel_err < 1e-8,
        "linear net error {}",
        report.max_rel_err
    );
}

#[test]
fn deep_mixed_stack_gradients() {
    // A miniature of the recognition architecture: conv/pool/conv/quadrant/
    // fc/relu/fc, checked end to end.
    let mut rng = SeededRng::new(11);
    let mut net = Network::new(vec![
        conv(&mut rng, 3, 1, 3),
        Layer::Relu,
        Layer::MaxPool2x2,
        conv(&mut rng, 4, 3, 3),
        Layer::Relu,
        Layer::QuadrantPool,
        Layer::Flatten,
        fc(&mut rng, 5, 16),
        Layer::Relu,
        fc(&mut rng, 1, 5),
    ]);
    check(&mut net, &[2, 1, 8, 8], &[2, 1], 1e-4);
}

#[test]
fn sampled_coordinates_cover_all_layers() {
    let mut rng = SeededRng::new(12);
    let mut net = Network::new(vec![
        conv(&mut rng, 4, 1, 3),
        Layer::Relu,
        Layer::Flatten,
        fc_from_conv(&mut rng),
    ]);
    let input = rand_tensor(&mut rng, &[1, 1, 4, 4], 1.0);
    let target = rand_tensor(&mut rng, &[1, 2], 1.0);
    let full = grad_check(&mut net, &input, &target, 1e-5, None).unwrap();
    let sampled = grad_check(&mut net, &input, &target, 1e-5, Some(5)).unwrap();
    assert!(sampled.checked < full.checked);
    assert!(sampled.max_rel_err <= full.max_rel_err + 1e-12);
}

fn fc_from_conv(rng: &mut SeededRng) -> Layer<f64> {
    // 4 channels * 4 * 4 spatial, flattened by the caller's shape contract.
    Layer::Fc(
        Fc::new(
            rand_tensor(rng, &[2, 64], 0.1),
            vec![rng.gauss() * 0.1, rng.gauss() * 0.1],
        )
        .unwrap(),
    )
}
