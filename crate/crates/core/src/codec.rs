//! Desk-scale codec surrogate: intra-frame block-DCT quantization with an
//! entropy-based bits estimate.
//!
//! The recognition models only ever consume decoded pixels, so any monotone
//! quality-rate knob exercises the protocol. Blocks go through an orthonormal
//! type-II DCT, uniform quantization with the H.264-style step mapping
//! `Q(qp) = 2^((qp-4)/6)` (in 8-bit pixel units, hence the 255 scaling), and
//! the inverse transform. Bits are the zeroth-order entropy of the quantized
//! symbol stream plus a fixed per-frame header charge, which reproduces the
//! overhead-per-pixel asymmetry between LR sizes.

use thiserror::Error;

use crate::data::LabeledSequence;
use crate::image::{downsample, normalize, upsample_bicubic, DownsampleFactor, Frame};
use crate::metrics::{report_or_degenerate, MetricsError, SeriesPair};

/// Fixed per-frame header overhead, in bits.
pub const HEADER_BITS: f64 = 256.0;

#[derive(Debug, Error, PartialEq)]
pub enum CodecError {
    #[error("qp {0} outside [0, 51]")]
    BadQp(u8),
    #[error("block size must be positive")]
    BadBlockSize,
    #[error("qp list is empty")]
    EmptyQpList,
    #[error("metrics failed during sweep: {0}")]
    Metrics(#[from] MetricsError),
}

#[derive(Clone, Copy, Debug)]
pub struct CodecConfig {
    pub qp: u8,
    pub block_size: usize,
}

impl CodecConfig {
    pub fn new(qp: u8) -> Result<Self, CodecError> {
        Self::with_block_size(qp, 8)
    }

    pub fn with_block_size(qp: u8, block_size: usize) -> Result<Self, CodecError> {
        if qp > 51 {
            return Err(CodecError::BadQp(qp));
        }
        if block_size == 0 {
            return Err(CodecError::BadBlockSize);
        }
        Ok(CodecConfig { qp, block_size })
    }

    /// Quantization step in 8-bit pixel units.
    pub fn step(&self) -> f64 {
        2f64.powf((self.qp as f64 - 4.0) / 6.0)
    }
}

/// One measured point of a rate-distortion curve.
#[derive(Clone, Debug)]
pub struct RdPoint {
    pub s: DownsampleFactor,
    pub qp: u8,
    /// Bits per pixel of the LR frame, averaged over frames.
    pub bpp: f64,
    pub rmse: f64,
    pub cc: f64,
    pub ccc: f64,
    pub n: usize,
    /// True when the predictor collapsed to a constant and cc/ccc were
    /// reported as zero.
    pub degenerate: bool,
}

/// Orthonormal type-II DCT matrix of side `n`.
fn dct_matrix(n: usize) -> Vec<f64> {
    let mut c = vec![0.0; n * n];
    let norm0 = (1.0 / n as f64).sqrt();
    let norm = (2.0 / n as f64).sqrt();
    for k in 0..n {
        for j in 0..n {
            c[k * n + j] = if k == 0 {
                norm0
            } else {
                norm * (std::f64::consts::PI * (2.0 * j as f64 + 1.0) * k as f64
                    / (2.0 * n as f64))
                    .cos()
            };
        }
    }
    c
}

/// `out = a * b` for n x n row-major blocks.
fn matmul_n(a: &[f64], b: &[f64], out: &mut [f64], n: usize) {
    for i in 0..n {
        for j in 0..n {
            let mut acc = 0.0;
            for k in 0..n {
                acc += a[i * n + k] * b[k * n + j];
            }
            out[i * n + j] = acc;
        }
    }
}

fn transpose_n(a: &[f64], n: usize) -> Vec<f64> {
    let mut t = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            t[j * n + i] = a[i * n + j];
        }
    }
    t
}

/// Edge-replicates a frame up to block-size multiples.
fn pad_to_blocks(frame: &Frame, bs: usize) -> (Frame, usize, usize) {
    let ph = frame.height().div_ceil(bs) * bs;
    let pw = frame.width().div_ceil(bs) * bs;
    if ph == frame.height() && pw == frame.width() {
        return (frame.clone(), ph, pw);
    }
    let mut data = vec![0.0; ph * pw];
    for y in 0..ph {
        let sy = y.min(frame.height() - 1);
        for x in 0..pw {
            let sx = x.min(frame.width() - 1);
            data[y * pw + x] = frame.get(sy, sx);
        }
    }
    (
        Frame::new(ph, pw, data).expect("padded frame is finite"),
        ph,
        pw,
    )
}

/// Encodes and immediately decodes one frame. Returns the reconstruction
/// (clamped to [0, 1]) and the total bit estimate for the frame, header
/// included. The quantized symbols are exposed through [`encode_symbols`]
/// for callers that need the stream itself.
pub fn encode_decode(frame: &Frame, cfg: &CodecConfig) -> (Frame, f64) {
    let (recon, symbols) = transform_frame(frame, cfg);
    let bits = entropy_bits(&symbols) + HEADER_BITS;
    (recon, bits)
}

/// Quantized symbol stream of a frame at the given config.
pub fn encode_symbols(frame: &Frame, cfg: &CodecConfig) -> Vec<i32> {
    transform_frame(frame, cfg).1
}

fn transform_frame(frame: &Frame, cfg: &CodecConfig) -> (Frame, Vec<i32>) {
    let bs = cfg.block_size;
    let q = cfg.step();
    let c = dct_matrix(bs);
    let ct = transpose_n(&c, bs);
    let (padded, ph, pw) = pad_to_blocks(frame, bs);

    let mut out = vec![0.0; ph * pw];
    let mut symbols = Vec::with_capacity(ph * pw);
    let mut block = vec![0.0; bs * bs];
    let mut tmp = vec![0.0; bs * bs];
    let mut coeff = vec![0.0; bs * bs];
    for by in (0..ph).step_by(bs) {
        for bx in (0..pw).step_by(bs) {
            for y in 0..bs {
                for x in 0..bs {
                    // 8-bit pixel convention: quantize in 0..255 units.
                    block[y * bs + x] = padded.get(by + y, bx + x) * 255.0;
                }
            }
            // coeff = C * block * C^T
            matmul_n(&c, &block, &mut tmp, bs);
            matmul_n(&tmp, &ct, &mut coeff, bs);
            for v in coeff.iter_mut() {
                let sym = (*v / q).round();
                symbols.push(sym as i32);
                *v = sym * q;
            }
            // block = C^T * coeff * C
            matmul_n(&ct, &coeff, &mut tmp, bs);
            matmul_n(&tmp, &c, &mut block, bs);
            for y in 0..bs {
                for x in 0..bs {
                    out[(by + y) * pw + bx + x] = (block[y * bs + x] / 255.0).clamp(0.0, 1.0);
                }
            }
        }
    }
    let mut cropped = Vec::with_capacity(frame.height() * frame.width());
    for y in 0..frame.height() {
        cropped.extend_from_slice(&out[y * pw..y * pw + frame.width()]);
    }
    (
        Frame::new(frame.height(), frame.width(), cropped).expect("reconstruction is finite"),
        symbols,
    )
}

/// Total zeroth-order entropy of a symbol stream, in bits.
fn entropy_bits(symbols: &[i32]) -> f64 {
    if symbols.is_empty() {
        return 0.0;
    }
    let mut counts = std::collections::HashMap::new();
    for &s in symbols {
        *counts.entry(s).or_insert(0u64) += 1;
    }
    let n = symbols.len() as f64;
    let h: f64 = counts
        .values()
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.log2()
        })
        .sum();
    h * n
}

/// Bits per pixel: entropy of the symbol histogram times the symbol count,
/// divided by the pixel count, plus the per-frame header share.
pub fn bpp_estimate(symbols: &[i32], pixel_count: usize) -> f64 {
    (entropy_bits(symbols) + HEADER_BITS) / pixel_count as f64
}

/// Runs the rate-distortion protocol for one downsampling factor: for each
/// qp, every test frame goes downsample -> encode/decode -> upsample ->
/// normalize -> `predict`, with no training anywhere, and the metrics are
/// computed over the concatenation of all sequences.
pub fn rd_sweep(
    sequences: &[LabeledSequence],
    s: DownsampleFactor,
    qp_list: &[u8],
    mut predict: impl FnMut(&Frame) -> f64,
) -> Result<Vec<RdPoint>, CodecError> {
    if qp_list.is_empty() {
        return Err(CodecError::EmptyQpList);
    }
    let lr_pixels = s.lr_size() * s.lr_size();
    let mut points = Vec::with_capacity(qp_list.len());
    for &qp in qp_list {
        let cfg = CodecConfig::new(qp)?;
        let mut preds = Vec::new();
        let mut labels = Vec::new();
        let mut bpp_sum = 0.0;
        let mut frames = 0usize;
        for seq in sequences {
            for (frame, &valence) in seq.frames.iter().zip(&seq.valence) {
                let lr = downsample(frame, s);
                let (decoded, bits) = encode_decode(&lr, &cfg);
                bpp_sum += bits / lr_pixels as f64;
                frames += 1;
                let input = normalize(&upsample_bicubic(&decoded));
                preds.push(predict(&input));
                labels.push(valence);
            }
        }
        let (m, degenerate) = report_or_degenerate(&SeriesPair::new(&preds, &labels)?)?;
        points.push(RdPoint {
            s,
            qp,
            bpp: bpp_sum / frames as f64,
            rmse: m.rmse,
            cc: m.cc,
            ccc: m.ccc,
            n: m.n,
            degenerate,
        });
    }
    Ok(points)
}
