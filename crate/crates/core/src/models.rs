//! The two network architectures and the layer transplant between them.
//!
//! Both share the same three-layer 5x5 convolutional front end (64, 128,
//! 256 filters). The SR network keeps full resolution everywhere and ends in
//! a single linear 5x5 reconstruction filter; the recognition network pools
//! after every conv stage (2x2 max, 2x2 max, quadrant), then runs a 300-unit
//! hidden layer with dropout 0.5 into a linear valence regressor.
//!
//! Initialization: hidden conv/fc weights are zero-mean Gaussians with std
//! sqrt(2/fan_in); the two output layers start at zero so training first
//! fits a readout of the random features, which keeps the paper's 0.01
//! learning rate stable at desk scale. All draws come from the run seed.

use thiserror::Error;

use crate::image::{Frame, HR_SIZE};
use crate::nn::{Conv2d, Dropout, Fc, Layer, Network, NnError, Workspace};
use crate::rng::SeededRng;
use crate::tensor::{Scalar, Tensor};

/// Hidden width of the fully-connected layer.
pub const FC_HIDDEN: usize = 300;
/// Flattened quadrant-pool output: 256 channels * 2 * 2.
pub const FC_INPUT: usize = 1024;
/// Dropout probability on the hidden layer.
pub const DROPOUT_P: f64 = 0.5;

const KERNEL: usize = 5;
const PAD: usize = (KERNEL - 1) / 2;
const CONV_CHANNELS: [usize; 3] = [64, 128, 256];

/// Gains on the sqrt(2/fan_in) init std, one per conv stage plus the hidden
/// fc. Calibrated on normalized face batches so each stage's pre-activation
/// RMS stays near unity despite the inflation from max/quadrant pooling and
/// spatially correlated inputs; without them the 0.01 SGD rate diverges.
const CONV_GAINS: [f64; 3] = [0.72, 0.90, 0.50];
const FC_GAIN: f64 = 0.38;
/// The SR network's head regresses pixels from 5x5 patches of 256 channels,
/// a much wider least-squares problem than the recognition head, so its
/// feature scale must sit lower for the same learning rate to stay stable.
const SR_CONV_GAINS: [f64; 3] = [0.72, 0.80, 0.25];

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("conv layer {index} shape mismatch: source {src:?}, destination {dst:?}")]
    ArchMismatch {
        index: usize,
        src: Vec<usize>,
        dst: Vec<usize>,
    },
    #[error("expected a {expected}x{expected} input frame, got {h}x{w}")]
    BadInputSize {
        expected: usize,
        h: usize,
        w: usize,
    },
    #[error(transparent)]
    Nn(#[from] NnError),
}

/// 4-layer fully convolutional reconstruction network. No pooling: spatial
/// size is preserved end to end.
pub struct SrFcn<S> {
    pub net: Network<S>,
}

/// Valence regression CNN.
pub struct EmoCnn<S> {
    pub net: Network<S>,
}

fn gauss_tensor<S: Scalar>(rng: &mut SeededRng, shape: &[usize], std: f64) -> Tensor<S> {
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| S::from_f64(rng.gauss() * std)).collect();
    Tensor::from_vec_unchecked(shape.to_vec(), data)
}

fn hidden_conv<S: Scalar>(
    rng: &mut SeededRng,
    out_c: usize,
    in_c: usize,
    gain: f64,
) -> Conv2d<S> {
    let fan_in = (in_c * KERNEL * KERNEL) as f64;
    let std = gain * (2.0 / fan_in).sqrt();
    let w = gauss_tensor(rng, &[out_c, in_c, KERNEL, KERNEL], std);
    Conv2d::new(w, vec![S::ZERO; out_c], PAD).expect("static architecture is valid")
}

/// Builds the reconstruction network from a seed.
pub fn build_srfcn<S: Scalar>(seed: u64) -> SrFcn<S> {
    let mut rng = SeededRng::new(seed);
    let layers = vec![
        Layer::Conv(hidden_conv(&mut rng, CONV_CHANNELS[0], 1, SR_CONV_GAINS[0])),
        Layer::Relu,
        Layer::Conv(hidden_conv(&mut rng, CONV_CHANNELS[1], CONV_CHANNELS[0], SR_CONV_GAINS[1])),
        Layer::Relu,
        Layer::Conv(hidden_conv(&mut rng, CONV_CHANNELS[2], CONV_CHANNELS[1], SR_CONV_GAINS[2])),
        Layer::Relu,
        // Linear reconstruction layer, zero-initialized.
        Layer::Conv(
            Conv2d::new(
                Tensor::zeros(&[1, CONV_CHANNELS[2], KERNEL, KERNEL]),
                vec![S::ZERO],
                PAD,
            )
            .expect("static architecture is valid"),
        ),
    ];
    SrFcn {
        net: Network::new(layers),
    }
}

/// Builds the recognition network from a seed.
pub fn build_emocnn<S: Scalar>(seed: u64) -> EmoCnn<S> {
    let mut rng = SeededRng::new(seed);
    let layers = vec![
        Layer::Conv(hidden_conv(&mut rng, CONV_CHANNELS[0], 1, CONV_GAINS[0])),
        Layer::Relu,
        Layer::MaxPool2x2,
        Layer::Conv(hidden_conv(&mut rng, CONV_CHANNELS[1], CONV_CHANNELS[0], CONV_GAINS[1])),
        Layer::Relu,
        Layer::MaxPool2x2,
        Layer::Conv(hidden_conv(&mut rng, CONV_CHANNELS[2], CONV_CHANNELS[1], CONV_GAINS[2])),
        Layer::Relu,
        Layer::QuadrantPool,
        Layer::Flatten,
        Layer::Fc(
            Fc::new(
                gauss_tensor(
                    &mut rng,
                    &[FC_HIDDEN, FC_INPUT],
                    FC_GAIN * (2.0 / FC_INPUT as f64).sqrt(),
                ),
                vec![S::ZERO; FC_HIDDEN],
            )
            .expect("static architecture is valid"),
        ),
        Layer::Relu,
        Layer::Dropout(Dropout::new(DROPOUT_P).expect("0.5 is a valid probability")),
        // Linear regression head, zero-initialized.
        Layer::Fc(
            Fc::new(Tensor::zeros(&[1, FC_HIDDEN]), vec![S::ZERO])
                .expect("static architecture is valid"),
        ),
    ];
    EmoCnn {
        net: Network::new(layers),
    }
}

/// Learning-rate scale applied to transplanted layers: the pretrained conv
/// stack fine-tunes at a tenth of the fresh layers' rate.
pub const TRANSPLANT_LR_SCALE: f64 = 0.1;

/// Copies the SR network's first three conv layers (weights and biases,
/// bit-exact) into the recognition network and marks them with the 0.1
/// learning-rate scale. Fresh layers keep scale 1.0. Idempotent.
pub fn transplant<S: Scalar>(src: &SrFcn<S>, dst: &mut EmoCnn<S>) -> Result<(), ModelError> {
    let src_idx = src.net.conv_indices();
    let dst_idx = dst.net.conv_indices();
    // Validate all three pairs before mutating anything.
    for (i, (&si, &di)) in src_idx.iter().zip(&dst_idx).take(3).enumerate() {
        let (Layer::Conv(s), Layer::Conv(d)) = (&src.net.layers[si], &dst.net.layers[di]) else {
            unreachable!("conv_indices returns conv layers")
        };
        if s.weights.shape() != d.weights.shape() {
            return Err(ModelError::ArchMismatch {
                index: i,
                src: s.weights.shape().to_vec(),
                dst: d.weights.shape().to_vec(),
            });
        }
    }
    for (&si, &di) in src_idx.iter().zip(&dst_idx).take(3) {
        let Layer::Conv(s) = &src.net.layers[si] else {
            unreachable!()
        };
        let (weights, biases) = (s.weights.clone(), s.biases.clone());
        let Layer::Conv(d) = &mut dst.net.layers[di] else {
            unreachable!()
        };
        d.weights = weights;
        d.biases = biases;
        d.lr_scale = TRANSPLANT_LR_SCALE;
    }
    // Everything else trains at the full phase rate.
    for li in dst.net.param_layer_indices() {
        if dst_idx[..3].contains(&li) {
            continue;
        }
        match &mut dst.net.layers[li] {
            Layer::Conv(c) => c.lr_scale = 1.0,
            Layer::Fc(f) => f.lr_scale = 1.0,
            _ => {}
        }
    }
    Ok(())
}

/// Converts normalized 96x96 frames into a `(B, 1, 96, 96)` batch tensor.
pub fn frames_to_batch<S: Scalar>(frames: &[&Frame]) -> Result<Tensor<S>, ModelError> {
    assert!(!frames.is_empty(), "empty batch");
    let mut data = Vec::with_capacity(frames.len() * HR_SIZE * HR_SIZE);
    for f in frames {
        if f.height() != HR_SIZE || f.width() != HR_SIZE {
            return Err(ModelError::BadInputSize {
                expected: HR_SIZE,
                h: f.height(),
                w: f.width(),
            });
        }
        data.extend(f.data().iter().map(|&v| S::from_f64(v)));
    }
    Ok(Tensor::from_vec_unchecked(
        vec![frames.len(), 1, HR_SIZE, HR_SIZE],
        data,
    ))
}

impl<S: Scalar> SrFcn<S> {
    /// Eval-mode reconstruction of one normalized frame.
    pub fn reconstruct(&self, input: &Frame, ws: &mut Workspace<S>) -> Result<Frame, ModelError> {
        let x = frames_to_batch::<S>(&[input])?;
        let y = self.net.forward_eval(&x, ws)?;
        debug_assert_eq!(y.shape(), &[1, 1, HR_SIZE, HR_SIZE]);
        let data = y.data().iter().map(|v| v.to_f64()).collect();
        Ok(Frame::new(HR_SIZE, HR_SIZE, data).expect("network output was finite-checked"))
    }

    pub fn param_count(&self) -> usize {
        self.net.param_count()
    }
}

impl<S: Scalar> EmoCnn<S> {
    /// Eval-mode valence prediction for one normalized frame.
    pub fn predict(&self, input: &Frame, ws: &mut Workspace<S>) -> Result<f64, ModelError> {
        Ok(self.predict_batch(&[input], ws)?[0])
    }

    /// Eval-mode predictions for a batch of normalized frames.
    pub fn predict_batch(
        &self,
        inputs: &[&Frame],
        ws: &mut Workspace<S>,
    ) -> Result<Vec<f64>, ModelError> {
        let x = frames_to_batch::<S>(inputs)?;
        let y = self.net.forward_eval(&x, ws)?;
        debug_assert_eq!(y.shape(), &[inputs.len(), 1]);
        Ok(y.data().iter().map(|v| v.to_f64()).collect())
    }

    pub fn param_count(&self) -> usize {
        self.net.param_count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::normalize;
    use crate::synth::{render_face, FaceGeometry};

    fn test_frame() -> Frame {
        normalize(&render_face(&FaceGeometry::canonical(), 0.3))
    }

    #[test]
    fn srfcn_preserves_spatial_size() {
        let model = build_srfcn::<f64>(1);
        let out = model
            .reconstruct(&test_frame(), &mut Workspace::new())
            .unwrap();
        assert_eq!((out.height(), out.width()), (HR_SIZE, HR_SIZE));
        assert!(out.data().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn emocnn_outputs_one_scalar() {
        let model = build_emocnn::<f64>(1);
        let v = model.predict(&test_frame(), &mut Workspace::new()).unwrap();
        assert!(v.is_finite());
    }

    #[test]
    fn same_seed_identical_builds() {
        let a = build_emocnn::<f64>(9);
        let b = build_emocnn::<f64>(9);
        for (la, lb) in a.net.layers.iter().zip(&b.net.layers) {
            if let (Layer::Conv(ca), Layer::Conv(cb)) = (la, lb) {
                assert_eq!(ca.weights.data(), cb.weights.data());
            }
        }
    }

    #[test]
    fn different_seeds_differ() {
        let a = build_srfcn::<f64>(1);
        let b = build_srfcn::<f64>(2);
        let (Layer::Conv(ca), Layer::Conv(cb)) = (&a.net.layers[0], &b.net.layers[0]) else {
            unreachable!()
        };
        assert_ne!(ca.weights.data(), cb.weights.data());
    }

    #[test]
    fn parameter_counts_are_the_architecture_arithmetic() {
        // conv1 64*1*25+64, conv2 128*64*25+128, conv3 256*128*25+256,
        // fc 300*1024+300, regressor 1*300+1.
        let emo = build_emocnn::<f64>(1);
        assert_eq!(emo.param_count(), 1664 + 204_928 + 819_456 + 307_500 + 301);
        // Same front end, then one 1-channel 5x5 reconstruction filter.
        let sr = build_srfcn::<f64>(1);
        assert_eq!(sr.param_count(), 1664 + 204_928 + 819_456 + 6401);
    }

    #[test]
    fn transplant_copies_bits_and_sets_scales() {
        let sr = build_srfcn::<f64>(3);
        let mut emo = build_emocnn::<f64>(4);
        transplant(&sr, &mut emo).unwrap();
        for (si, di) in sr.net.conv_indices().iter().zip(emo.net.conv_indices()) {
            if *si == *sr.net.conv_indices().last().unwrap() {
                break;
            }
            let (Layer::Conv(s), Layer::Conv(d)) = (&sr.net.layers[*si], &emo.net.layers[di])
            else {
                unreachable!()
            };
            assert_eq!(s.weights.data(), d.weights.data());
            assert_eq!(s.biases, d.biases);
            assert_eq!(d.lr_scale, TRANSPLANT_LR_SCALE);
        }
        // Head layers untouched by scale changes.
        let Layer::Fc(fc) = &emo.net.layers[10] else {
            unreachable!()
        };
        assert_eq!(fc.lr_scale, 1.0);
    }

    #[test]
    fn transplant_is_idempotent_and_leaves_fc_alone() {
        let sr = build_srfcn::<f64>(3);
        let mut emo = build_emocnn::<f64>(4);
        let Layer::Fc(fc_before) = &emo.net.layers[10] else {
            unreachable!()
        };
        let fc_snapshot = fc_before.weights.clone();
        transplant(&sr, &mut emo).unwrap();
        let snap1: Vec<f64> = match &emo.net.layers[0] {
            Layer::Conv(c) => c.weights.data().to_vec(),
            _ => unreachable!(),
        };
        transplant(&sr, &mut emo).unwrap();
        let snap2: Vec<f64> = match &emo.net.layers[0] {
            Layer::Conv(c) => c.weights.data().to_vec(),
            _ => unreachable!(),
        };
        assert_eq!(snap1, snap2);
        let Layer::Fc(fc_after) = &emo.net.layers[10] else {
            unreachable!()
        };
        assert_eq!(fc_snapshot.data(), fc_after.weights.data());
    }

    #[test]
    fn first_conv_activations_match_after_transplant() {
        let sr = build_srfcn::<f64>(5);
        let mut emo = build_emocnn::<f64>(6);
        transplant(&sr, &mut emo).unwrap();
        let mut ws = Workspace::new();
        let x = frames_to_batch::<f64>(&[&test_frame()]).unwrap();
        let (Layer::Conv(cs), Layer::Conv(cd)) = (&sr.net.layers[0], &emo.net.layers[0]) else {
            unreachable!()
        };
        let ys = cs.forward(&x, &mut ws).unwrap();
        let yd = cd.forward(&x, &mut ws).unwrap();
        assert_eq!(ys.data(), yd.data());
    }

    #[test]
    fn eval_forward_is_deterministic() {
        let model = build_emocnn::<f64>(2);
        let f = test_frame();
        let mut ws = Workspace::new();
        let a = model.predict(&f, &mut ws).unwrap();
        let b = model.predict(&f, &mut ws).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn batch_prediction_matches_single() {
        let model = build_emocnn::<f64>(8);
        let f1 = test_frame();
        let f2 = normalize(&render_face(&FaceGeometry::canonical(), -0.7));
        let mut ws = Workspace::new();
        let batch = model.predict_batch(&[&f1, &f2], &mut ws).unwrap();
        let s1 = model.predict(&f1, &mut ws).unwrap();
        let s2 = model.predict(&f2, &mut ws).unwrap();
        assert!((batch[0] - s1).abs() < 1e-12);
        assert!((batch[1] - s2).abs() < 1e-12);
    }

    #[test]
    fn wrong_input_size_is_an_error() {
        let model = build_emocnn::<f64>(1);
        let small = Frame::constant(48, 48, 0.0);
        assert!(matches!(
            model.predict(&small, &mut Workspace::new()),
            Err(ModelError::BadInputSize { .. })
        ));
    }
}
