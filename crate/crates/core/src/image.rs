//! Grayscale frames and the encoder/decoder-side resampling path:
//! grayscale conversion, face cropping, anti-aliased bicubic reduction,
//! bicubic interpolation back to full size, and per-image normalization.

use thiserror::Error;

/// Side length of the high-resolution face crop.
pub const HR_SIZE: usize = 96;

#[derive(Debug, Error, PartialEq)]
pub enum ImageError {
    #[error("{0} is not a supported downsampling factor (expected one of 3, 4, 6, 8, 12, 16)")]
    BadFactor(usize),
    #[error("bounding box {x},{y} {w}x{h} does not fit a {fw}x{fh} frame or has zero area")]
    BadBBox {
        x: usize,
        y: usize,
        w: usize,
        h: usize,
        fw: usize,
        fh: usize,
    },
    #[error("frame data length {got} does not match {h}x{w}")]
    BadDims { h: usize, w: usize, got: usize },
    #[error("non-finite pixel value at index {0}")]
    NonFinite(usize),
}

/// A single grayscale image with real-valued pixels, nominally in [0, 1].
#[derive(Clone, Debug, PartialEq)]
pub struct Frame {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl Frame {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self, ImageError> {
        if data.len() != height * width {
            return Err(ImageError::BadDims {
                h: height,
                w: width,
                got: data.len(),
            });
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(ImageError::NonFinite(i));
        }
        Ok(Frame {
            height,
            width,
            data,
        })
    }

    pub fn constant(height: usize, width: usize, value: f64) -> Self {
        Frame {
            height,
            width,
            data: vec![value; height * width],
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn get(&self, y: usize, x: usize) -> f64 {
        self.data[y * self.width + x]
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }
}

/// Spatial reduction ratio; restricted to the factors the pipeline supports.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct DownsampleFactor(u8);

impl DownsampleFactor {
    pub const ALL: [DownsampleFactor; 6] = [
        DownsampleFactor(3),
        DownsampleFactor(4),
        DownsampleFactor(6),
        DownsampleFactor(8),
        DownsampleFactor(12),
        DownsampleFactor(16),
    ];

    pub fn new(s: usize) -> Result<Self, ImageError> {
        if Self::ALL.iter().any(|f| f.0 as usize == s) {
            Ok(DownsampleFactor(s as u8))
        } else {
            Err(ImageError::BadFactor(s))
        }
    }

    pub fn value(self) -> usize {
        self.0 as usize
    }

    /// Low-resolution side length: ceil(96 / s). Identity for the declared
    /// factors (all divide 96) but pins behaviour for any future one.
    pub fn lr_size(self) -> usize {
        HR_SIZE.div_ceil(self.value())
    }
}

impl std::fmt::Display for DownsampleFactor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Interleaved RGB image used only at corpus ingestion.
pub struct RgbFrame {
    pub height: usize,
    pub width: usize,
    /// Row-major `[r, g, b]` triplets.
    pub data: Vec<[f64; 3]>,
}

/// ITU-R BT.601 luma: 0.299 R + 0.587 G + 0.114 B.
pub fn to_grayscale(rgb: &RgbFrame) -> Frame {
    let data = rgb
        .data
        .iter()
        .map(|[r, g, b]| 0.299 * r + 0.587 * g + 0.114 * b)
        .collect();
    Frame {
        height: rgb.height,
        width: rgb.width,
        data,
    }
}

/// Catmull-Rom bicubic kernel (a = -0.5), support [-2, 2].
fn bicubic_kernel(x: f64) -> f64 {
    const A: f64 = -0.5;
    let x = x.abs();
    if x <= 1.0 {
        (A + 2.0) * x * x * x - (A + 3.0) * x * x + 1.0
    } else if x < 2.0 {
        A * x * x * x - 5.0 * A * x * x + 8.0 * A * x - 4.0 * A
    } else {
        0.0
    }
}

/// Per-output-pixel filter taps for one axis: clamped source indices plus
/// normalized weights. When reducing, the kernel support is scaled by the
/// reduction ratio so the filter also anti-aliases.
fn axis_weights(src: usize, dst: usize) -> Vec<(Vec<usize>, Vec<f64>)> {
    let scale = src as f64 / dst as f64;
    let filter_scale = scale.max(1.0);
    let radius = 2.0 * filter_scale;
    (0..dst)
        .map(|i| {
            let center = (i as f64 + 0.5) * scale - 0.5;
            let lo = (center - radius).ceil() as isize;
            let hi = (center + radius).floor() as isize;
            let mut idx = Vec::with_capacity((hi - lo + 1) as usize);
            let mut wts = Vec::with_capacity(idx.capacity());
            let mut sum = 0.0;
            for j in lo..=hi {
                let w = bicubic_kernel((j as f64 - center) / filter_scale);
                if w == 0.0 {
                    continue;
                }
                // Clamp-to-edge boundary handling.
                idx.push(j.clamp(0, src as isize - 1) as usize);
                wts.push(w);
                sum += w;
            }
            // Normalizing to unit sum preserves constants exactly.
            for w in &mut wts {
                *w /= sum;
            }
            (idx, wts)
        })
        .collect()
}

fn resample_rows(frame: &Frame, dst_w: usize) -> Frame {
    let weights = axis_weights(frame.width, dst_w);
    let mut data = vec![0.0; frame.height * dst_w];
    for y in 0..frame.height {
        let src_row = &frame.data[y * frame.width..(y + 1) * frame.width];
        let dst_row = &mut data[y * dst_w..(y + 1) * dst_w];
        for (o, (idx, wts)) in weights.iter().enumerate() {
            let mut acc = 0.0;
            for (&j, &w) in idx.iter().zip(wts) {
                acc += w * src_row[j];
            }
            dst_row[o] = acc;
        }
    }
    Frame {
        height: frame.height,
        width: dst_w,
        data,
    }
}

fn resample_cols(frame: &Frame, dst_h: usize) -> Frame {
    let weights = axis_weights(frame.height, dst_h);
    let mut data = vec![0.0; dst_h * frame.width];
    for (o, (idx, wts)) in weights.iter().enumerate() {
        let dst_row = &mut data[o * frame.width..(o + 1) * frame.width];
        for (&j, &w) in idx.iter().zip(wts) {
            let src_row = &frame.data[j * frame.width..(j + 1) * frame.width];
            for (d, &s) in dst_row.iter_mut().zip(src_row) {
                *d += w * s;
            }
        }
    }
    Frame {
        height: dst_h,
        width: frame.width,
        data,
    }
}

/// Separable bicubic resize: row pass then column pass.
pub fn resize_bicubic(frame: &Frame, dst_h: usize, dst_w: usize) -> Frame {
    let rows = resample_rows(frame, dst_w);
    resample_cols(&rows, dst_h)
}

/// Anti-aliased bicubic reduction of a 96x96 frame to its LR size for `s`.
pub fn downsample(frame: &Frame, s: DownsampleFactor) -> Frame {
    let lr = s.lr_size();
    resize_bicubic(frame, lr, lr)
}

/// Bicubic interpolation back up to 96x96.
pub fn upsample_bicubic(frame: &Frame) -> Frame {
    resize_bicubic(frame, HR_SIZE, HR_SIZE)
}

/// Axis-aligned crop region in pixel coordinates.
#[derive(Clone, Copy, Debug)]
pub struct BBox {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
}

/// Crops the face region and bicubic-resamples it to 96x96.
pub fn crop_resize_face(frame: &Frame, bbox: BBox) -> Result<Frame, ImageError> {
    if bbox.w == 0
        || bbox.h == 0
        || bbox.x + bbox.w > frame.width
        || bbox.y + bbox.h > frame.height
    {
        return Err(ImageError::BadBBox {
            x: bbox.x,
            y: bbox.y,
            w: bbox.w,
            h: bbox.h,
            fw: frame.width,
            fh: frame.height,
        });
    }
    let mut data = Vec::with_capacity(bbox.w * bbox.h);
    for y in bbox.y..bbox.y + bbox.h {
        data.extend_from_slice(&frame.data[y * frame.width + bbox.x..y * frame.width + bbox.x + bbox.w]);
    }
    let crop = Frame {
        height: bbox.h,
        width: bbox.w,
        data,
    };
    Ok(resize_bicubic(&crop, HR_SIZE, HR_SIZE))
}

/// Mean subtraction and contrast normalization, per image. Flat images map
/// to all zeros via the epsilon floor on the standard deviation.
pub fn normalize(frame: &Frame) -> Frame {
    let n = frame.data.len() as f64;
    let mean = frame.data.iter().sum::<f64>() / n;
    let var = frame
        .data
        .iter()
        .map(|v| (v - mean) * (v - mean))
        .sum::<f64>()
        / n;
    let denom = var.sqrt().max(1e-6);
    Frame {
        height: frame.height,
        width: frame.width,
        data: frame.data.iter().map(|v| (v - mean) / denom).collect(),
    }
}

/// Peak signal-to-noise ratio for unit-peak frames.
pub fn psnr(a: &Frame, b: &Frame) -> f64 {
    assert_eq!(a.data.len(), b.data.len());
    let mse = a
        .data
        .iter()
        .zip(&b.data)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        / a.data.len() as f64;
    if mse == 0.0 {
        f64::INFINITY
    } else {
        -10.0 * mse.log10()
    }
}

/// Mean squared error between two equally sized frames.
pub fn frame_mse(a: &Frame, b: &Frame) -> f64 {
    assert_eq!(a.data.len(), b.data.len());
    a.data
        .iter()
        .zip(&b.data)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        / a.data.len() as f64
}
