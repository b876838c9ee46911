//! On-disk corpus layout shared by the synthetic generator and licensed
//! data: `<root>/<seq_id>/frame_%06d.pgm` plus `<root>/<seq_id>/labels.csv`
//! with header `frame,valence`. One loader serves both sources.

use std::fs;
use std::path::{Path, PathBuf};

use emosr_core::data::LabeledSequence;
use emosr_core::image::Frame;
use thiserror::Error;

use crate::pgm::{read_pgm, write_pgm, BitDepth, PgmError};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error(transparent)]
    Pgm(#[from] PgmError),
    #[error("{path}: missing labels.csv")]
    MissingLabels { path: String },
    #[error("{path} line {line}: {detail}")]
    BadLabelRow {
        path: String,
        line: usize,
        detail: String,
    },
    #[error("sequence {id}: {frames} frame files but {labels} label rows")]
    CountMismatch {
        id: String,
        frames: usize,
        labels: usize,
    },
    #[error("sequence {id}: {source}")]
    BadSequence {
        id: String,
        source: emosr_core::data::DataError,
    },
    #[error("{path}: no sequence directories found")]
    EmptyCorpus { path: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CorpusError + '_ {
    move |source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Writes sequences in the canonical layout.
pub fn write_corpus(
    root: &Path,
    sequences: &[LabeledSequence],
    depth: BitDepth,
) -> Result<(), CorpusError> {
    for seq in sequences {
        let dir = root.join(&seq.id);
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        for (i, frame) in seq.frames.iter().enumerate() {
            write_pgm(&dir.join(format!("frame_{i:06}.pgm")), frame, depth)?;
        }
        let mut csv = String::from("frame,valence\n");
        for (i, v) in seq.valence.iter().enumerate() {
            csv.push_str(&format!("{i},{v:.6}\n"));
        }
        let labels = dir.join("labels.csv");
        fs::write(&labels, csv).map_err(io_err(&labels))?;
    }
    Ok(())
}

fn read_labels(path: &Path) -> Result<Vec<f64>, CorpusError> {
    let p = || path.display().to_string();
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim() == "frame,valence" => {}
        Some((_, header)) => {
            return Err(CorpusError::BadLabelRow {
                path: p(),
                line: 1,
                detail: format!("expected header 'frame,valence', got {header:?}"),
            })
        }
        None => {
            return Err(CorpusError::BadLabelRow {
                path: p(),
                line: 1,
                detail: "empty file".into(),
            })
        }
    }
    let mut out = Vec::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let (frame_s, valence_s) = line.split_once(',').ok_or_else(|| CorpusError::BadLabelRow {
            path: p(),
            line: line_no,
            detail: "expected 'frame,valence'".into(),
        })?;
        let frame: usize = frame_s.trim().parse().map_err(|e| CorpusError::BadLabelRow {
            path: p(),
            line: line_no,
            detail: format!("bad frame index: {e}"),
        })?;
        if frame != out.len() {
            return Err(CorpusError::BadLabelRow {
                path: p(),
                line: line_no,
                detail: format!("frame index {frame} out of order (expected {})", out.len()),
            });
        }
        let valence: f64 = valence_s
            .trim()
            .parse()
            .map_err(|e| CorpusError::BadLabelRow {
                path: p(),
                line: line_no,
                detail: format!("bad valence: {e}"),
            })?;
        if !(-1.0..=1.0).contains(&valence) {
            return Err(CorpusError::BadLabelRow {
                path: p(),
                line: line_no,
                detail: format!("valence {valence} outside [-1, 1]"),
            });
        }
        out.push(valence);
    }
    Ok(out)
}

/// Loads every sequence under `root`, sorted by directory name. Validates
/// frame/label counts, label range and frame geometry; diagnostics name the
/// offending file or row.
pub fn load_corpus(root: &Path) -> Result<Vec<LabeledSequence>, CorpusError> {
    let mut dirs: Vec<PathBuf> = fs::read_dir(root)
        .map_err(io_err(root))?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.is_dir())
        .collect();
    dirs.sort();
    if dirs.is_empty() {
        return Err(CorpusError::EmptyCorpus {
            path: root.display().to_string(),
        });
    }
    let mut sequences = Vec::with_capacity(dirs.len());
    for dir in dirs {
        let id = dir
            .file_name()
            .expect("read_dir yields named entries")
            .to_string_lossy()
            .to_string();
        let labels_path = dir.join("labels.csv");
        if !labels_path.exists() {
            return Err(CorpusError::MissingLabels {
                path: dir.display().to_string(),
            });
        }
        let valence = read_labels(&labels_path)?;
        let mut frames: Vec<Frame> = Vec::with_capacity(valence.len());
        loop {
            let path = dir.join(format!("frame_{:06}.pgm", frames.len()));
            if !path.exists() {
                break;
            }
            frames.push(read_pgm(&path)?);
        }
        if frames.len() != valence.len() {
            return Err(CorpusError::CountMismatch {
                id,
                frames: frames.len(),
                labels: valence.len(),
            });
        }
        sequences.push(
            LabeledSequence::new(id.clone(), frames, valence)
                .map_err(|source| CorpusError::BadSequence { id, source })?,
        );
    }
    Ok(sequences)
}
