//! Experiment harness for the low-bit-rate emotion recognition pipeline:
//! corpus IO, plan files, variant training and evaluation, rate-distortion
//! sweeps, and report rendering. The `emosr` binary is a thin layer over
//! this library.

pub mod corpus;
pub mod harness;
pub mod pgm;
pub mod plan;
