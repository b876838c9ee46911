//! Binary PGM (P5) reading and writing, 8- or 16-bit.
//!
//! Pipeline values stay real in [0, 1]; quantization to integer gray levels
//! happens only here, at the file boundary. 16-bit samples are big-endian
//! per the netpbm format.

use std::fs;
use std::io::Write;
use std::path::Path;

use emosr_core::image::Frame;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PgmError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}: not a binary PGM (expected P5 magic)")]
    BadMagic { path: String },
    #[error("{path}: malformed header: {detail}")]
    BadHeader { path: String, detail: String },
    #[error("{path}: expected {expected} sample bytes, found {found}")]
    ShortData {
        path: String,
        expected: usize,
        found: usize,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BitDepth {
    Eight,
    Sixteen,
}

impl BitDepth {
    fn maxval(self) -> u32 {
        match self {
            BitDepth::Eight => 255,
            BitDepth::Sixteen => 65535,
        }
    }
}

/// Writes a frame as binary PGM, quantizing [0, 1] to the gray range.
pub fn write_pgm(path: &Path, frame: &Frame, depth: BitDepth) -> Result<(), PgmError> {
    let maxval = depth.maxval();
    let mut buf = Vec::with_capacity(
        32 + frame.data().len() * if depth == BitDepth::Eight { 1 } else { 2 },
    );
    write!(buf, "P5\n{} {}\n{}\n", frame.width(), frame.height(), maxval)
        .expect("writing to Vec cannot fail");
    for &v in frame.data() {
        let q = (v.clamp(0.0, 1.0) * maxval as f64).round() as u32;
        match depth {
            BitDepth::Eight => buf.push(q as u8),
            BitDepth::Sixteen => buf.extend_from_slice(&(q as u16).to_be_bytes()),
        }
    }
    fs::write(path, buf).map_err(|source| PgmError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Reads a binary PGM into a [0, 1] frame. Header comments are skipped.
pub fn read_pgm(path: &Path) -> Result<Frame, PgmError> {
    let p = || path.display().to_string();
    let bytes = fs::read(path).map_err(|source| PgmError::Io {
        path: p(),
        source,
    })?;
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err(PgmError::BadMagic { path: p() });
    }
    let mut pos = 2;
    let mut fields = [0usize; 3]; // width, height, maxval
    for field in &mut fields {
        // Skip whitespace and '#' comments between header tokens.
        loop {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                break;
            }
        }
        let start = pos;
        while pos < bytes.len() && bytes[pos].is_ascii_digit() {
            pos += 1;
        }
        if start == pos {
            return Err(PgmError::BadHeader {
                path: p(),
                detail: "expected an integer field".into(),
            });
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .expect("digits are utf-8")
            .parse()
            .map_err(|e| PgmError::BadHeader {
                path: p(),
                detail: format!("{e}"),
            })?;
    }
    let [width, height, maxval] = fields;
    if maxval == 0 || maxval > 65535 {
        return Err(PgmError::BadHeader {
            path: p(),
            detail: format!("maxval {maxval} outside 1..=65535"),
        });
    }
    // Exactly one whitespace byte separates header from samples.
    pos += 1;
    let two_byte = maxval > 255;
    let expected = width * height * if two_byte { 2 } else { 1 };
    if bytes.len() < pos + expected {
        return Err(PgmError::ShortData {
            path: p(),
            expected,
            found: bytes.len().saturating_sub(pos),
        });
    }
    let samples = &bytes[pos..pos + expected];
    let scale = 1.0 / maxval as f64;
    let data: Vec<f64> = if two_byte {
        samples
            .chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]) as f64 * scale)
            .collect()
    } else {
        samples.iter().map(|&b| b as f64 * scale).collect()
    };
    Frame::new(height, width, data).map_err(|e| PgmError::BadHeader {
        path: p(),
        detail: e.to_string(),
    })
}
