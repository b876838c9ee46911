//! Minimal differentiable-network engine.
//!
//! Exactly the layer inventory the two architectures need: 5x5 same-size
//! convolutions, 2x2 max pooling, quadrant pooling, ReLU, a fully-connected
//! layer, inverted dropout, MSE loss, and SGD with momentum, weight decay
//! and a per-layer learning-rate scale. No autodiff graph: networks are
//! straight-line sequences, so the backward pass is a reverse walk over a
//! recorded forward trace.

mod conv;
mod dropout;
mod gradcheck;
mod linear;
mod loss;
mod pool;
mod sgd;

pub use conv::Conv2d;
pub use dropout::Dropout;
pub use gradcheck::{grad_check, GradCheckReport};
pub use linear::Fc;
pub use loss::mse_loss;
pub use pool::{block_max_pool_shape, PoolKind};
pub use sgd::{sgd_step, SgdConfig, Velocity};

use thiserror::Error;

use crate::rng::SeededRng;
use crate::tensor::{Scalar, Tensor};

#[derive(Debug, Error, PartialEq)]
pub enum NnError {
    #[error("input has {got} channels, layer expects {expected}")]
    ChannelMismatch { expected: usize, got: usize },
    #[error("input feature dimension {got} does not match weight inner dimension {expected}")]
    DimMismatch { expected: usize, got: usize },
    #[error("spatial extent {extent} is not divisible by pooling window {window}")]
    BadPoolExtent { extent: usize, window: usize },
    #[error("expected a {expected}-d input, got shape {got:?}")]
    BadRank { expected: usize, got: Vec<usize> },
    #[error("dropout probability {0} outside [0, 1)")]
    BadDropoutP(f64),
    #[error("kernel must be square with odd side, got {0}x{1}")]
    BadKernel(usize, usize),
    #[error("shapes {a:?} and {b:?} do not match")]
    ShapeMismatch { a: Vec<usize>, b: Vec<usize> },
    #[error("loss is not finite ({0}); training diverged or inputs are invalid")]
    NonFiniteLoss(f64),
}

/// One layer of a straight-line network.
pub enum Layer<S> {
    Conv(Conv2d<S>),
    Fc(Fc<S>),
    Relu,
    /// 2x2 max pooling with stride 2.
    MaxPool2x2,
    /// One max per H/2 x W/2 quadrant, yielding a 2x2 map per channel.
    QuadrantPool,
    Flatten,
    Dropout(Dropout),
}

impl<S: Scalar> Layer<S> {
    pub fn kind_name(&self) -> &'static str {
        match self {
            Layer::Conv(_) => "conv",
            Layer::Fc(_) => "fc",
            Layer::Relu => "relu",
            Layer::MaxPool2x2 => "maxpool2x2",
            Layer::QuadrantPool => "quadrant_pool",
            Layer::Flatten => "flatten",
            Layer::Dropout(_) => "dropout",
        }
    }

    pub fn param_count(&self) -> usize {
        match self {
            Layer::Conv(c) => c.weights.len() + c.biases.len(),
            Layer::Fc(f) => f.weights.len() + f.biases.len(),
            _ => 0,
        }
    }
}

/// Reusable scratch buffers for the im2col path; grown on demand and shared
/// across forward/backward calls so the hot loop does not re-fault large
/// allocations every iteration.
#[derive(Default)]
pub struct Workspace<S> {
    pub(crate) col: Vec<S>,
    pub(crate) col2: Vec<S>,
}

impl<S: Scalar> Workspace<S> {
    pub fn new() -> Self {
        Workspace {
            col: Vec::new(),
            col2: Vec::new(),
        }
    }
}

/// Per-layer state recorded by a traced forward pass.
enum TraceItem<S> {
    /// Flat argmax indices into the layer input, one per output element.
    PoolArgmax(Vec<u32>),
    /// Inverted-dropout mask (0 or 1/(1-p) per element).
    DropoutMask(Vec<S>),
    None,
}

/// Forward trace: every intermediate activation plus pool/dropout state.
/// `acts[i]` is the input of layer `i`; `acts.last()` is the network output.
pub struct FwdTrace<S> {
    acts: Vec<Tensor<S>>,
    items: Vec<TraceItem<S>>,
}

impl<S: Scalar> FwdTrace<S> {
    pub fn output(&self) -> &Tensor<S> {
        self.acts.last().expect("trace always holds the input")
    }

    /// Input of layer `i`; index `n_layers()` is the network output.
    pub fn activation(&self, i: usize) -> &Tensor<S> {
        &self.acts[i]
    }

    pub fn n_layers(&self) -> usize {
        self.items.len()
    }

    pub fn into_output(mut self) -> Tensor<S> {
        self.acts.pop().expect("trace always holds the input")
    }
}

/// Parameter gradients aligned with the network's layer list.
pub struct ParamGrads<S> {
    pub layers: Vec<Option<(Tensor<S>, Vec<S>)>>,
}

impl<S: Scalar> ParamGrads<S> {
    fn empty(n: usize) -> Self {
        ParamGrads {
            layers: (0..n).map(|_| None).collect(),
        }
    }
}

/// A straight-line network: layers applied in order.
pub struct Network<S> {
    pub layers: Vec<Layer<S>>,
}

impl<S: Scalar> Network<S> {
    pub fn new(layers: Vec<Layer<S>>) -> Self {
        Network { layers }
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Layer::param_count).sum()
    }

    /// Indices of layers that carry parameters, in order.
    pub fn param_layer_indices(&self) -> Vec<usize> {
        self.layers
            .iter()
            .enumerate()
            .filter(|(_, l)| l.param_count() > 0)
            .map(|(i, _)| i)
            .collect()
    }

    /// Indices of convolution layers, in order.
    pub fn conv_indices(&self) -> Vec<usize> {
        self.layers
            .iter()
            .enumerate()
            .filter(|(_, l)| matches!(l, Layer::Conv(_)))
            .map(|(i, _)| i)
            .collect()
    }

    /// Inference pass: dropout is the identity, nothing is recorded.
    pub fn forward_eval(
        &self,
        input: &Tensor<S>,
        ws: &mut Workspace<S>,
    ) -> Result<Tensor<S>, NnError> {
        let mut x = input.clone();
        for layer in &self.layers {
            x = match layer {
                Layer::Conv(c) => c.forward(&x, ws)?,
                Layer::Fc(f) => f.forward(&x)?,
                Layer::Relu => x.map(|v| if v > S::ZERO { v } else { S::ZERO }),
                Layer::MaxPool2x2 => pool::forward(&x, PoolKind::Max2x2)?.0,
                Layer::QuadrantPool => pool::forward(&x, PoolKind::Quadrant)?.0,
                Layer::Flatten => flatten(x)?,
                Layer::Dropout(_) => x,
            };
        }
        Ok(x)
    }

    /// Training/grad-check pass recording everything backward needs.
    ///
    /// `dropout_rng: None` runs dropout as the identity (eval behaviour),
    /// which is what gradient checking requires.
    pub fn forward_traced(
        &self,
        input: &Tensor<S>,
        mut dropout_rng: Option<&mut SeededRng>,
        ws: &mut Workspace<S>,
    ) -> Result<FwdTrace<S>, NnError> {
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        let mut items = Vec::with_capacity(self.layers.len());
        acts.push(input.clone());
        for layer in &self.layers {
            let x = acts.last().expect("non-empty");
            let (out, item) = match layer {
                Layer::Conv(c) => (c.forward(x, ws)?, TraceItem::None),
                Layer::Fc(f) => (f.forward(x)?, TraceItem::None),
                Layer::Relu => (
                    x.map(|v| if v > S::ZERO { v } else { S::ZERO }),
                    TraceItem::None,
                ),
                Layer::MaxPool2x2 => {
                    let (out, idx) = pool::forward(x, PoolKind::Max2x2)?;
                    (out, TraceItem::PoolArgmax(idx))
                }
                Layer::QuadrantPool => {
                    let (out, idx) = pool::forward(x, PoolKind::Quadrant)?;
                    (out, TraceItem::PoolArgmax(idx))
                }
                Layer::Flatten => (flatten(x.clone())?, TraceItem::None),
                Layer::Dropout(d) => match dropout_rng.as_deref_mut() {
                    Some(rng) => {
                        let (out, mask) = d.forward_train(x, rng);
                        (out, TraceItem::DropoutMask(mask))
                    }
                    None => (x.clone(), TraceItem::None),
                },
            };
            acts.push(out);
            items.push(item);
        }
        Ok(FwdTrace { acts, items })
    }

    /// Reverse pass over a forward trace. Returns the gradient with respect
    /// to the network input and the per-layer parameter gradients.
    pub fn backward(
        &self,
        trace: &FwdTrace<S>,
        grad_output: Tensor<S>,
        ws: &mut Workspace<S>,
    ) -> Result<(Tensor<S>, ParamGrads<S>), NnError> {
        if grad_output.shape() != trace.output().shape() {
            return Err(NnError::ShapeMismatch {
                a: grad_output.shape().to_vec(),
                b: trace.output().shape().to_vec(),
            });
        }
        let mut grads = ParamGrads::empty(self.layers.len());
        let mut g = grad_output;
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let input = &trace.acts[i];
            let output = &trace.acts[i + 1];
            g = match layer {
                Layer::Conv(c) => {
                    let (gx, gw, gb) = c.backward(input, &g, ws)?;
                    grads.layers[i] = Some((gw, gb));
                    gx
                }
                Layer::Fc(f) => {
                    let (gx, gw, gb) = f.backward(input, &g)?;
                    grads.layers[i] = Some((gw, gb));
                    gx
                }
                Layer::Relu => {
                    // Subgradient 0 at exactly 0.
                    let data = g
                        .data()
                        .iter()
                        .zip(output.data())
                        .map(|(&gv, &ov)| if ov > S::ZERO { gv } else { S::ZERO })
                        .collect();
                    Tensor::from_vec_unchecked(input.shape().to_vec(), data)
                }
                Layer::MaxPool2x2 | Layer::QuadrantPool => {
                    let TraceItem::PoolArgmax(idx) = &trace.items[i] else {
                        unreachable!("pool layer without argmax trace")
                    };
                    pool::backward(input.shape(), idx, &g)
                }
                Layer::Flatten => g.reshaped(input.shape().to_vec()).expect("same count"),
                Layer::Dropout(_) => match &trace.items[i] {
                    TraceItem::DropoutMask(mask) => {
                        let data = g
                            .data()
                            .iter()
                            .zip(mask)
                            .map(|(&gv, &mv)| gv * mv)
                            .collect();
                        Tensor::from_vec_unchecked(input.shape().to_vec(), data)
                    }
                    _ => g,
                },
            };
        }
        Ok((g, grads))
    }
}

fn flatten<S: Scalar>(x: Tensor<S>) -> Result<Tensor<S>, NnError> {
    let shape = x.shape().to_vec();
    if shape.len() < 2 {
        return Err(NnError::BadRank {
            expected: 2,
            got: shape,
        });
    }
    let batch = shape[0];
    let rest: usize = shape[1..].iter().product();
    Ok(x.reshaped(vec![batch, rest]).expect("same count"))
}
