//! Corpus handling: labeled sequences, sequence-level splits, and the
//! LR/HR pair fabrication pipeline shared by SR pretraining, recognition
//! training, and evaluation.

use thiserror::Error;

use crate::codec::{encode_decode, CodecConfig};
use crate::image::{downsample, normalize, upsample_bicubic, DownsampleFactor, Frame, HR_SIZE};

#[derive(Debug, Error, PartialEq)]
pub enum DataError {
    #[error("sequence {id}: {frames} frames but {labels} labels")]
    CountMismatch {
        id: String,
        frames: usize,
        labels: usize,
    },
    #[error("sequence {id}: valence {value} at frame {index} outside [-1, 1]")]
    ValenceOutOfRange {
        id: String,
        index: usize,
        value: f64,
    },
    #[error("sequence {id}: frame {index} is {h}x{w}, expected {hr}x{hr}", hr = HR_SIZE)]
    BadFrameSize {
        id: String,
        index: usize,
        h: usize,
        w: usize,
    },
    #[error("sequence {id} is empty")]
    Empty { id: String },
    #[error("cannot split {n} sequences into non-empty train/val/test sets")]
    SplitTooSmall { n: usize },
}

/// A face-video sequence: 96x96 frames at 40 ms spacing with one valence
/// label per frame.
#[derive(Clone, Debug)]
pub struct LabeledSequence {
    pub id: String,
    pub frames: Vec<Frame>,
    pub valence: Vec<f64>,
}

impl LabeledSequence {
    pub fn new(id: String, frames: Vec<Frame>, valence: Vec<f64>) -> Result<Self, DataError> {
        if frames.is_empty() {
            return Err(DataError::Empty { id });
        }
        if frames.len() != valence.len() {
            return Err(DataError::CountMismatch {
                id,
                frames: frames.len(),
                labels: valence.len(),
            });
        }
        for (index, f) in frames.iter().enumerate() {
            if f.height() != HR_SIZE || f.width() != HR_SIZE {
                return Err(DataError::BadFrameSize {
                    id,
                    index,
                    h: f.height(),
                    w: f.width(),
                });
            }
        }
        for (index, &value) in valence.iter().enumerate() {
            if !(-1.0..=1.0).contains(&value) {
                return Err(DataError::ValenceOutOfRange { id, index, value });
            }
        }
        Ok(LabeledSequence {
            id,
            frames,
            valence,
        })
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

/// Whether encode/decode sits between downsampling and interpolation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CodingPipeline {
    Plain,
    Coded { qp: u8 },
}

/// What a fabricated pair trains against.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TargetKind {
    /// The normalized HR frame (SR pretraining).
    Reconstruction,
    /// The per-frame valence label (recognition).
    Valence,
}

#[derive(Clone, Debug)]
pub enum PairTarget {
    Reconstruction(Frame),
    Valence(f64),
}

/// One audit entry per fabricated input: which sequence/frame it came from,
/// which degradation it went through, and what it trains against.
/// `s: None` means the HR path; `target: Reconstruction` marks SR
/// pretraining pairs.
#[derive(Clone, Debug, PartialEq)]
pub struct PairRecord {
    pub seq: String,
    pub frame: usize,
    pub s: Option<usize>,
    pub qp: Option<u8>,
    pub target: TargetKind,
}

/// Append-only log of every input the data pipeline produced. Tests use it
/// to assert e.g. that the HR variant never downsamples and that LR variants
/// never leak HR pixels into a recognition input.
#[derive(Default, Debug)]
pub struct PipelineLog {
    pub records: Vec<PairRecord>,
}

impl PipelineLog {
    pub fn new() -> Self {
        Self::default()
    }
}

/// Degrades one HR frame along the transmission path: downsample by `s`,
/// optionally encode/decode, interpolate back to 96x96, normalize.
pub fn degraded_input(hr: &Frame, s: DownsampleFactor, pipeline: CodingPipeline) -> Frame {
    let lr = downsample(hr, s);
    let lr = match pipeline {
        CodingPipeline::Plain => lr,
        CodingPipeline::Coded { qp } => {
            let cfg = CodecConfig::new(qp).expect("qp validated by caller");
            encode_decode(&lr, &cfg).0
        }
    };
    normalize(&upsample_bicubic(&lr))
}

/// Fabricates training pairs for one sequence: every HR frame becomes a
/// degraded, normalized 96x96 input paired with either the normalized HR
/// frame or the valence label. Each produced pair is appended to `log`.
pub fn make_pairs(
    seq: &LabeledSequence,
    s: DownsampleFactor,
    pipeline: CodingPipeline,
    kind: TargetKind,
    log: &mut PipelineLog,
) -> Vec<(Frame, PairTarget)> {
    let qp = match pipeline {
        CodingPipeline::Plain => None,
        CodingPipeline::Coded { qp } => Some(qp),
    };
    seq.frames
        .iter()
        .zip(&seq.valence)
        .enumerate()
        .map(|(i, (hr, &valence))| {
            let input = degraded_input(hr, s, pipeline);
            let target = match kind {
                TargetKind::Reconstruction => PairTarget::Reconstruction(normalize(hr)),
                TargetKind::Valence => PairTarget::Valence(valence),
            };
            log.records.push(PairRecord {
                seq: seq.id.clone(),
                frame: i,
                s: Some(s.value()),
                qp,
                target: kind,
            });
            (input, target)
        })
        .collect()
}

/// The HR pipeline: normalized full-resolution inputs, no downsampling.
pub fn hr_inputs(seq: &LabeledSequence, log: &mut PipelineLog) -> Vec<(Frame, f64)> {
    seq.frames
        .iter()
        .zip(&seq.valence)
        .enumerate()
        .map(|(i, (hr, &valence))| {
            log.records.push(PairRecord {
                seq: seq.id.clone(),
                frame: i,
                s: None,
                qp: None,
                target: TargetKind::Valence,
            });
            (normalize(hr), valence)
        })
        .collect()
}

/// Sequence-level split, never frame-level: the last `test_frac` of the
/// corpus is the test set, the tail `val_frac` of the remainder is
/// validation, the rest trains. Each part gets at least one sequence.
pub fn split_sequences(
    seqs: &[LabeledSequence],
    val_frac: f64,
    test_frac: f64,
) -> Result<(Vec<LabeledSequence>, Vec<LabeledSequence>, Vec<LabeledSequence>), DataError> {
    let n = seqs.len();
    let n_test = ((n as f64 * test_frac).ceil() as usize).max(1);
    let rest = n.saturating_sub(n_test);
    let n_val = ((rest as f64 * val_frac).ceil() as usize).max(1);
    if rest < n_val + 1 {
        return Err(DataError::SplitTooSmall { n });
    }
    let n_train = rest - n_val;
    let train = seqs[..n_train].to_vec();
    let val = seqs[n_train..rest].to_vec();
    let test = seqs[rest..].to_vec();
    Ok((train, val, test))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{gen_synthetic, SyntheticSpec};

    fn corpus(n: usize, frames: usize) -> Vec<LabeledSequence> {
        gen_synthetic(&SyntheticSpec {
            n_sequences: n,
            frames_per_sequence: frames,
            seed: 11,
            noise_level: 0.0,
        })
    }

    #[test]
    fn constructor_validates() {
        let f = Frame::constant(HR_SIZE, HR_SIZE, 0.5);
        assert!(matches!(
            LabeledSequence::new("a".into(), vec![f.clone()], vec![0.1, 0.2]),
            Err(DataError::CountMismatch { .. })
        ));
        assert!(matches!(
            LabeledSequence::new("a".into(), vec![f.clone()], vec![1.5]),
            Err(DataError::ValenceOutOfRange { index: 0, .. })
        ));
        let small = Frame::constant(10, 10, 0.5);
        assert!(matches!(
            LabeledSequence::new("a".into(), vec![small], vec![0.0]),
            Err(DataError::BadFrameSize { .. })
        ));
        assert!(LabeledSequence::new("a".into(), vec![f], vec![0.0]).is_ok());
    }

    #[test]
    fn pairs_have_hr_shape_and_log_provenance() {
        let seqs = corpus(1, 4);
        let s = DownsampleFactor::new(3).unwrap();
        let mut log = PipelineLog::new();
        let pairs = make_pairs(
            &seqs[0],
            s,
            CodingPipeline::Plain,
            TargetKind::Valence,
            &mut log,
        );
        assert_eq!(pairs.len(), 4);
        for (input, target) in &pairs {
            assert_eq!((input.height(), input.width()), (HR_SIZE, HR_SIZE));
            assert!(matches!(target, PairTarget::Valence(_)));
        }
        assert_eq!(log.records.len(), 4);
        assert!(log
            .records
            .iter()
            .all(|r| r.s == Some(3) && r.qp.is_none()));
    }

    #[test]
    fn coded_qp0_input_close_to_plain() {
        let seqs = corpus(1, 2);
        let s = DownsampleFactor::new(4).unwrap();
        let hr = &seqs[0].frames[0];
        // Compare pre-normalization reconstructions: the codec at qp=0 is
        // near-lossless, so inputs differ by at most 2/255 per pixel.
        let plain = upsample_bicubic(&downsample(hr, s));
        let cfg = CodecConfig::new(0).unwrap();
        let coded = upsample_bicubic(&encode_decode(&downsample(hr, s), &cfg).0);
        let max_diff = plain
            .data()
            .iter()
            .zip(coded.data())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        assert!(max_diff < 2.0 / 255.0, "max diff {max_diff}");
    }

    #[test]
    fn hr_path_never_downsamples() {
        let seqs = corpus(1, 3);
        let mut log = PipelineLog::new();
        let inputs = hr_inputs(&seqs[0], &mut log);
        assert_eq!(inputs.len(), 3);
        assert!(log.records.iter().all(|r| r.s.is_none() && r.qp.is_none()));
    }

    #[test]
    fn lr_paths_never_leak_hr_inputs() {
        let seqs = corpus(2, 3);
        let mut log = PipelineLog::new();
        for s in [3usize, 8, 16] {
            let s = DownsampleFactor::new(s).unwrap();
            for seq in &seqs {
                make_pairs(seq, s, CodingPipeline::Plain, TargetKind::Valence, &mut log);
            }
        }
        assert!(log.records.iter().all(|r| r.s.is_some()));
    }

    #[test]
    fn split_is_by_whole_sequences() {
        let seqs = corpus(10, 2);
        let (train, val, test) = split_sequences(&seqs, 0.1, 0.2).unwrap();
        assert_eq!(train.len() + val.len() + test.len(), 10);
        assert!(!train.is_empty() && !val.is_empty() && !test.is_empty());
        let ids: std::collections::HashSet<_> = train
            .iter()
            .chain(&val)
            .chain(&test)
            .map(|s| s.id.clone())
            .collect();
        assert_eq!(ids.len(), 10, "a sequence landed in two splits");
    }

    #[test]
    fn split_too_small_is_an_error() {
        let seqs = corpus(2, 2);
        assert!(matches!(
            split_sequences(&seqs, 0.1, 0.2),
            Err(DataError::SplitTooSmall { n: 2 })
        ));
    }
}
