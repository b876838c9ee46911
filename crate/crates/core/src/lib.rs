//! Core pipeline for emotion recognition from low bit rate video.
//!
//! The crate implements the full decoder-side stack: bicubic image ops for
//! the downsample/upsample path, a block-DCT codec surrogate with a bits-per-
//! pixel estimator, a small CNN engine with reverse-mode gradients, the two
//! network architectures (a 4-layer SR reconstruction FCN and the valence
//! regression CNN), the layer-transplant operation that connects them, the
//! training recipes (SR pretraining, joint fine-tuning, max-mix), and the
//! RMSE/CC/CCC metric suite used for evaluation.
//!
//! Everything here is deterministic given a seed: sample order, weight
//! initialization, dropout masks and data mixing all derive from explicit
//! seeded streams, and reductions run in a fixed order.

pub mod checkpoint;
pub mod codec;
pub mod data;
pub mod image;
pub mod metrics;
pub mod models;
pub mod nn;
pub mod rng;
pub mod synth;
pub mod tensor;
pub mod training;

pub use image::Frame;
pub use metrics::MetricsReport;
pub use tensor::Tensor;
