//! Versioned binary checkpoint container.
//!
//! Layout: magic, format version, element type, a manifest (seed, phase,
//! variant tag, iteration count, fine-tune mixture), then the layer list
//! with shapes and raw parameter values. Values are stored as little-endian
//! f64 bits, which round-trips both f32 and f64 parameters bit-exactly.

use thiserror::Error;

use crate::nn::{Conv2d, Dropout, Fc, Layer, Network};
use crate::tensor::{Scalar, Tensor};

const MAGIC: &[u8; 4] = b"EMSR";
const VERSION: u32 = 1;

#[derive(Debug, Error, PartialEq)]
pub enum CheckpointError {
    #[error("not a checkpoint: bad magic bytes")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    BadVersion(u32),
    #[error("checkpoint holds {stored} parameters but this build expects {expected}")]
    DtypeMismatch {
        stored: String,
        expected: &'static str,
    },
    #[error("unknown layer kind tag {0}")]
    BadLayerKind(u8),
    #[error("checkpoint truncated at byte {0}")]
    Truncated(usize),
    #[error("invalid utf-8 in manifest string")]
    BadString,
    #[error("stored tensor invalid: {0}")]
    BadTensor(String),
}

/// Provenance header of a checkpoint.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct CheckpointMeta {
    pub seed: u64,
    /// Training phase the parameters came from, e.g. "pretrain" / "finetune".
    pub phase: String,
    /// Variant tag, e.g. "HR", "LR-4", "Joint-OA".
    pub variant: String,
    pub iterations: u64,
    /// Downsampling factors mixed during fine-tuning (empty if single-s).
    pub s_mix: Vec<u8>,
}

struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn new() -> Self {
        Writer { buf: Vec::new() }
    }
    fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn string(&mut self, s: &str) {
        self.u32(s.len() as u32);
        self.buf.extend_from_slice(s.as_bytes());
    }
    fn values<S: Scalar>(&mut self, vs: &[S]) {
        self.u64(vs.len() as u64);
        for v in vs {
            self.f64(v.to_f64());
        }
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Reader { buf, pos: 0 }
    }
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        if self.pos + n > self.buf.len() {
            return Err(CheckpointError::Truncated(self.pos));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8, CheckpointError> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64, CheckpointError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn string(&mut self) -> Result<String, CheckpointError> {
        let len = self.u32()? as usize;
        String::from_utf8(self.take(len)?.to_vec()).map_err(|_| CheckpointError::BadString)
    }
    fn values<S: Scalar>(&mut self) -> Result<Vec<S>, CheckpointError> {
        let n = self.u64()? as usize;
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            out.push(S::from_f64(self.f64()?));
        }
        Ok(out)
    }
}

const KIND_CONV: u8 = 0;
const KIND_FC: u8 = 1;
const KIND_RELU: u8 = 2;
const KIND_MAXPOOL: u8 = 3;
const KIND_QUADRANT: u8 = 4;
const KIND_FLATTEN: u8 = 5;
const KIND_DROPOUT: u8 = 6;

/// Serializes a network with its provenance manifest.
pub fn encode_network<S: Scalar>(net: &Network<S>, meta: &CheckpointMeta) -> Vec<u8> {
    let mut w = Writer::new();
    w.buf.extend_from_slice(MAGIC);
    w.u32(VERSION);
    w.string(S::DTYPE);
    w.u64(meta.seed);
    w.string(&meta.phase);
    w.string(&meta.variant);
    w.u64(meta.iterations);
    w.u32(meta.s_mix.len() as u32);
    for &s in &meta.s_mix {
        w.u8(s);
    }
    w.u32(net.layers.len() as u32);
    for layer in &net.layers {
        match layer {
            Layer::Conv(c) => {
                w.u8(KIND_CONV);
                w.f64(c.lr_scale);
                w.u32(c.padding as u32);
                w.u32(c.weights.shape().len() as u32);
                for &d in c.weights.shape() {
                    w.u32(d as u32);
                }
                w.values(c.weights.data());
                w.values(&c.biases);
            }
            Layer::Fc(f) => {
                w.u8(KIND_FC);
                w.f64(f.lr_scale);
                w.u32(f.weights.shape().len() as u32);
                for &d in f.weights.shape() {
                    w.u32(d as u32);
                }
                w.values(f.weights.data());
                w.values(&f.biases);
            }
            Layer::Relu => w.u8(KIND_RELU),
            Layer::MaxPool2x2 => w.u8(KIND_MAXPOOL),
            Layer::QuadrantPool => w.u8(KIND_QUADRANT),
            Layer::Flatten => w.u8(KIND_FLATTEN),
            Layer::Dropout(d) => {
                w.u8(KIND_DROPOUT);
                w.f64(d.p);
            }
        }
    }
    w.buf
}

/// Reads just the manifest, without materializing parameters.
pub fn decode_meta(bytes: &[u8]) -> Result<(CheckpointMeta, String), CheckpointError> {
    let mut r = Reader::new(bytes);
    if r.take(4)? != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(CheckpointError::BadVersion(version));
    }
    let dtype = r.string()?;
    let meta = CheckpointMeta {
        seed: r.u64()?,
        phase: r.string()?,
        variant: r.string()?,
        iterations: r.u64()?,
        s_mix: {
            let n = r.u32()? as usize;
            (0..n).map(|_| r.u8()).collect::<Result<_, _>>()?
        },
    };
    Ok((meta, dtype))
}

/// Deserializes a network; the checkpoint's element type must match `S`.
pub fn decode_network<S: Scalar>(
    bytes: &[u8],
) -> Result<(Network<S>, CheckpointMeta), CheckpointError> {
    let (meta, dtype) = decode_meta(bytes)?;
    if dtype != S::DTYPE {
        return Err(CheckpointError::DtypeMismatch {
            stored: dtype,
            expected: S::DTYPE,
        });
    }
    // Re-read from the top to keep a single cursor.
    let mut r = Reader::new(bytes);
    r.take(4)?;
    r.u32()?;
    r.string()?;
    r.u64()?;
    r.string()?;
    r.string()?;
    r.u64()?;
    let n_mix = r.u32()? as usize;
    r.take(n_mix)?;

    let n_layers = r.u32()? as usize;
    let mut layers = Vec::with_capacity(n_layers);
    for _ in 0..n_layers {
        let kind = r.u8()?;
        let layer = match kind {
            KIND_CONV => {
                let lr_scale = r.f64()?;
                let padding = r.u32()? as usize;
                let ndim = r.u32()? as usize;
                let shape: Vec<usize> = (0..ndim)
                    .map(|_| r.u32().map(|d| d as usize))
                    .collect::<Result<_, _>>()?;
                let weights = Tensor::from_vec(shape, r.values()?)
                    .map_err(|e| CheckpointError::BadTensor(e.to_string()))?;
                let biases = r.values()?;
                let mut conv = Conv2d::new(weights, biases, padding)
                    .map_err(|e| CheckpointError::BadTensor(e.to_string()))?;
                conv.lr_scale = lr_scale;
                Layer::Conv(conv)
            }
            KIND_FC => {
                let lr_scale = r.f64()?;
                let ndim = r.u32()? as usize;
                let shape: Vec<usize> = (0..ndim)
                    .map(|_| r.u32().map(|d| d as usize))
                    .collect::<Result<_, _>>()?;
                let weights = Tensor::from_vec(shape, r.values()?)
                    .map_err(|e| CheckpointError::BadTensor(e.to_string()))?;
                let biases = r.values()?;
                let mut fc = Fc::new(weights, biases)
                    .map_err(|e| CheckpointError::BadTensor(e.to_string()))?;
                fc.lr_scale = lr_scale;
                Layer::Fc(fc)
            }
            KIND_RELU => Layer::Relu,
            KIND_MAXPOOL => Layer::MaxPool2x2,
            KIND_QUADRANT => Layer::QuadrantPool,
            KIND_FLATTEN => Layer::Flatten,
            KIND_DROPOUT => {
                let p = r.f64()?;
                Layer::Dropout(
                    Dropout::new(p).map_err(|e| CheckpointError::BadTensor(e.to_string()))?,
                )
            }
            other => return Err(CheckpointError::BadLayerKind(other)),
        };
        layers.push(layer);
    }
    Ok((Network::new(layers), meta))
}
