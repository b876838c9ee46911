//! The experiment driver: trains or loads every planned variant, evaluates
//! with the concatenation protocol, runs rate-distortion sweeps, and writes
//! deterministic CSV/markdown artifacts.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use emosr_core::checkpoint::{decode_network, encode_network, CheckpointError, CheckpointMeta};
use emosr_core::codec::rd_sweep;
use emosr_core::data::{split_sequences, CodingPipeline, LabeledSequence, PipelineLog};
use emosr_core::image::DownsampleFactor;
use emosr_core::metrics::concat_eval;
use emosr_core::models::{EmoCnn, SrFcn};
use emosr_core::nn::Workspace;
use emosr_core::synth::gen_synthetic;
use emosr_core::tensor::Scalar;
use emosr_core::training::{
    predict_sequences, train_variant, TrainVariant, TrainedVariant,
};
use thiserror::Error;

use crate::corpus::{load_corpus, CorpusError};
use crate::plan::{CorpusSource, Dtype, Plan};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Data(#[from] emosr_core::data::DataError),
    #[error("variant {variant}: {source}")]
    Train {
        variant: String,
        source: emosr_core::training::TrainError,
    },
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("checkpoint {path}: {source}")]
    Checkpoint {
        path: String,
        source: CheckpointError,
    },
    #[error("missing checkpoint {path}; run `emosr train` first")]
    MissingCheckpoint { path: String },
    #[error(transparent)]
    Codec(#[from] emosr_core::codec::CodecError),
    #[error(transparent)]
    Metrics(#[from] emosr_core::metrics::MetricsError),
    #[error("results file {path} line {line}: {detail}")]
    BadResults {
        path: String,
        line: usize,
        detail: String,
    },
}

fn io_err<'p>(path: &'p Path) -> impl FnOnce(std::io::Error) -> HarnessError + 'p {
    move |source| HarnessError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// One evaluated table row.
#[derive(Clone, Debug, PartialEq)]
pub struct ResultRow {
    pub variant: String,
    pub s: Option<usize>,
    pub qp: Option<u8>,
    pub bpp: Option<f64>,
    pub rmse: f64,
    pub cc: f64,
    pub ccc: f64,
    pub n: usize,
    pub degenerate: bool,
}

/// Rows in plan-declaration order, one per (variant, s, qp-or-uncompressed).
#[derive(Clone, Debug, Default)]
pub struct ResultTable {
    pub rows: Vec<ResultRow>,
}

fn fmt_opt_usize(v: Option<usize>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn fmt_opt_f64(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

impl ResultTable {
    /// Deterministic CSV rendering. The comment header records the code
    /// version and the seed; degenerate rows are listed in a comment so the
    /// column schema stays fixed.
    pub fn to_csv(&self, seed: u64, extra_comment: Option<&str>) -> String {
        let mut out = String::new();
        writeln!(
            out,
            "# emosr {} seed={seed}",
            env!("CARGO_PKG_VERSION")
        )
        .unwrap();
        if let Some(c) = extra_comment {
            writeln!(out, "# {c}").unwrap();
        }
        let degenerate: Vec<String> = self
            .rows
            .iter()
            .filter(|r| r.degenerate)
            .map(|r| {
                format!(
                    "{}:s={}:qp={}",
                    r.variant,
                    fmt_opt_usize(r.s),
                    r.qp.map(|q| q.to_string()).unwrap_or_default()
                )
            })
            .collect();
        if !degenerate.is_empty() {
            writeln!(out, "# degenerate predictor (cc/ccc reported as 0): {}", degenerate.join(" ")).unwrap();
        }
        writeln!(out, "variant,s,qp,bpp,rmse,cc,ccc,n").unwrap();
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{:.6},{:.6},{:.6},{}",
                r.variant,
                fmt_opt_usize(r.s),
                r.qp.map(|q| q.to_string()).unwrap_or_default(),
                fmt_opt_f64(r.bpp),
                r.rmse,
                r.cc,
                r.ccc,
                r.n
            )
            .unwrap();
        }
        out
    }

    /// Parses a CSV previously written by [`ResultTable::to_csv`].
    pub fn from_csv(path: &Path) -> Result<ResultTable, HarnessError> {
        let p = || path.display().to_string();
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        let mut rows = Vec::new();
        let mut saw_header = false;
        for (idx, line) in text.lines().enumerate() {
            let line_no = idx + 1;
            if line.starts_with('#') || line.trim().is_empty() {
                continue;
            }
            if !saw_header {
                if line != "variant,s,qp,bpp,rmse,cc,ccc,n" {
                    return Err(HarnessError::BadResults {
                        path: p(),
                        line: line_no,
                        detail: format!("unexpected header {line:?}"),
                    });
                }
                saw_header = true;
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 8 {
                return Err(HarnessError::BadResults {
                    path: p(),
                    line: line_no,
                    detail: format!("expected 8 fields, got {}", fields.len()),
                });
            }
            let parse_f = |s: &str, what: &str| -> Result<f64, HarnessError> {
                s.parse().map_err(|e| HarnessError::BadResults {
                    path: p(),
                    line: line_no,
                    detail: format!("bad {what}: {e}"),
                })
            };
            rows.push(ResultRow {
                variant: fields[0].to_string(),
                s: if fields[1].is_empty() {
                    None
                } else {
                    Some(parse_f(fields[1], "s")? as usize)
                },
                qp: if fields[2].is_empty() {
                    None
                } else {
                    Some(parse_f(fields[2], "qp")? as u8)
                },
                bpp: if fields[3].is_empty() {
                    None
                } else {
                    Some(parse_f(fields[3], "bpp")?)
                },
                rmse: parse_f(fields[4], "rmse")?,
                cc: parse_f(fields[5], "cc")?,
                ccc: parse_f(fields[6], "ccc")?,
                n: parse_f(fields[7], "n")? as usize,
                degenerate: false,
            });
        }
        if !saw_header {
            return Err(HarnessError::BadResults {
                path: p(),
                line: 0,
                detail: "no header row".into(),
            });
        }
        Ok(ResultTable { rows })
    }

    /// Markdown comparison grid in the familiar layout: one column block per
    /// evaluation factor with the HR column alongside, metric per row.
    pub fn to_markdown(&self) -> String {
        let uncompressed: Vec<&ResultRow> = self.rows.iter().filter(|r| r.qp.is_none()).collect();
        let hr = uncompressed
            .iter()
            .find(|r| r.variant == "HR")
            .copied();
        let factors: BTreeSet<usize> = uncompressed.iter().filter_map(|r| r.s).collect();
        let mut out = String::new();
        for &s in &factors {
            let block: Vec<&ResultRow> = uncompressed
                .iter()
                .filter(|r| r.s == Some(s))
                .copied()
                .collect();
            if block.is_empty() {
                continue;
            }
            writeln!(out, "### s = {s}\n").unwrap();
            let mut header = String::from("| metric | HR |");
            let mut rule = String::from("|---|---|");
            for r in &block {
                write!(header, " {} |", r.variant).unwrap();
                rule.push_str("---|");
            }
            writeln!(out, "{header}").unwrap();
            writeln!(out, "{rule}").unwrap();
            for (name, get) in [
                ("RMSE", &(|r: &ResultRow| r.rmse) as &dyn Fn(&ResultRow) -> f64),
                ("CC", &|r: &ResultRow| r.cc),
                ("CCC", &|r: &ResultRow| r.ccc),
            ] {
                let mut line = format!("| {name} |");
                match hr {
                    Some(h) => write!(line, " {:.3} |", get(h)).unwrap(),
                    None => line.push_str(" - |"),
                }
                for r in &block {
                    write!(line, " {:.3} |", get(r)).unwrap();
                }
                writeln!(out, "{line}").unwrap();
            }
            out.push('\n');
        }
        out
    }
}

/// Loads or generates the corpus and splits it by whole sequences.
pub fn prepare_corpus(
    plan: &Plan,
) -> Result<(Vec<LabeledSequence>, Vec<LabeledSequence>, Vec<LabeledSequence>), HarnessError> {
    let seqs = match &plan.corpus {
        CorpusSource::Synthetic(spec) => gen_synthetic(spec),
        CorpusSource::Path(path) => load_corpus(path)?,
    };
    Ok(split_sequences(&seqs, plan.val_frac, plan.test_frac)?)
}

fn checkpoint_path(out: &Path, variant: &TrainVariant, seed: u64) -> PathBuf {
    out.join("checkpoints")
        .join(format!("{}_seed{seed}.ckpt", variant.tag()))
}

fn frontend_path(out: &Path, variant: &TrainVariant, seed: u64) -> PathBuf {
    out.join("checkpoints")
        .join(format!("{}_seed{seed}.sr.ckpt", variant.tag()))
}

/// A variant ready for evaluation: recognizer plus optional frozen SR
/// front end.
pub struct LoadedVariant<S: Scalar> {
    pub variant: TrainVariant,
    pub recognizer: EmoCnn<S>,
    pub frontend: Option<SrFcn<S>>,
    pub meta: CheckpointMeta,
}

/// Trains a variant (or loads its cached checkpoint when present) and
/// persists checkpoint plus training logs.
pub fn train_or_load<S: Scalar>(
    variant: TrainVariant,
    train: &[LabeledSequence],
    val: &[LabeledSequence],
    plan: &Plan,
    seed: u64,
    out: &Path,
) -> Result<LoadedVariant<S>, HarnessError> {
    let ckpt = checkpoint_path(out, &variant, seed);
    if ckpt.exists() {
        return load_checkpointed(variant, seed, out);
    }
    let mut log = PipelineLog::new();
    let trained: TrainedVariant<S> = train_variant(
        variant,
        train,
        val,
        &plan.recipe,
        seed,
        &mut log,
    )
    .map_err(|source| HarnessError::Train {
        variant: variant.tag(),
        source,
    })?;
    persist(&trained, plan, seed, out)?;
    let meta = meta_for(&trained, plan, seed);
    Ok(LoadedVariant {
        variant,
        recognizer: trained.recognizer,
        frontend: trained.frontend,
        meta,
    })
}

fn meta_for<S: Scalar>(trained: &TrainedVariant<S>, plan: &Plan, seed: u64) -> CheckpointMeta {
    let s_mix = match trained.variant {
        TrainVariant::JointOa => plan
            .recipe
            .finetune
            .s_mix
            .iter()
            .map(|s| s.value() as u8)
            .collect(),
        _ => Vec::new(),
    };
    CheckpointMeta {
        seed,
        phase: "finetune".into(),
        variant: trained.variant.tag(),
        iterations: trained.optimizer_steps,
        s_mix,
    }
}

fn persist<S: Scalar>(
    trained: &TrainedVariant<S>,
    plan: &Plan,
    seed: u64,
    out: &Path,
) -> Result<(), HarnessError> {
    let ckpt_dir = out.join("checkpoints");
    fs::create_dir_all(&ckpt_dir).map_err(io_err(&ckpt_dir))?;
    let logs_dir = out.join("logs");
    fs::create_dir_all(&logs_dir).map_err(io_err(&logs_dir))?;

    let meta = meta_for(trained, plan, seed);
    let path = checkpoint_path(out, &trained.variant, seed);
    fs::write(&path, encode_network(&trained.recognizer.net, &meta)).map_err(io_err(&path))?;
    if let Some(sr) = &trained.frontend {
        let meta = CheckpointMeta {
            phase: "pretrain".into(),
            ..meta.clone()
        };
        let path = frontend_path(out, &trained.variant, seed);
        fs::write(&path, encode_network(&sr.net, &meta)).map_err(io_err(&path))?;
    }

    // Per-epoch log: one CSV line per epoch with losses, validation metrics
    // and the learning rates in force.
    let mut csv = String::from(
        "epoch,train_loss,val_rmse,val_cc,val_ccc,lr_fresh,lr_transplanted,dropped_lr\n",
    );
    for e in &trained.epochs {
        writeln!(
            csv,
            "{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{}",
            e.epoch,
            e.train_loss,
            e.val_rmse,
            e.val_cc,
            e.val_ccc,
            e.lr_fresh,
            e.lr_transplanted,
            e.dropped_lr
        )
        .unwrap();
    }
    let path = logs_dir.join(format!("{}_seed{seed}_epochs.csv", trained.variant.tag()));
    fs::write(&path, csv).map_err(io_err(&path))?;

    if !trained.pretrain_curve.is_empty() {
        let mut csv = String::from("iteration,loss\n");
        for (i, l) in trained.pretrain_curve.iter().enumerate() {
            writeln!(csv, "{i},{l:.6}").unwrap();
        }
        let path = logs_dir.join(format!("{}_seed{seed}_pretrain.csv", trained.variant.tag()));
        fs::write(&path, csv).map_err(io_err(&path))?;
    }
    Ok(())
}

/// Loads a previously persisted variant; errors if the checkpoint is absent.
pub fn load_checkpointed<S: Scalar>(
    variant: TrainVariant,
    seed: u64,
    out: &Path,
) -> Result<LoadedVariant<S>, HarnessError> {
    let path = checkpoint_path(out, &variant, seed);
    if !path.exists() {
        return Err(HarnessError::MissingCheckpoint {
            path: path.display().to_string(),
        });
    }
    let read = |p: &Path| -> Result<Vec<u8>, HarnessError> {
        fs::read(p).map_err(io_err(p))
    };
    let (net, meta) =
        decode_network::<S>(&read(&path)?).map_err(|source| HarnessError::Checkpoint {
            path: path.display().to_string(),
            source,
        })?;
    let recognizer = EmoCnn { net };
    let frontend = match variant {
        TrainVariant::NonJoint(_) => {
            let p = frontend_path(out, &variant, seed);
            if !p.exists() {
                return Err(HarnessError::MissingCheckpoint {
                    path: p.display().to_string(),
                });
            }
            let (net, _) =
                decode_network::<S>(&read(&p)?).map_err(|source| HarnessError::Checkpoint {
                    path: p.display().to_string(),
                    source,
                })?;
            Some(SrFcn { net })
        }
        _ => None,
    };
    Ok(LoadedVariant {
        variant,
        recognizer,
        frontend,
        meta,
    })
}

/// Evaluates one variant on the test split, appending rows to the table:
/// a single row for HR and single-factor variants, one row per evaluation
/// factor for the one-for-all model (all from its single checkpoint).
pub fn eval_variant<S: Scalar>(
    loaded: &LoadedVariant<S>,
    test: &[LabeledSequence],
    s_eval: &[DownsampleFactor],
    table: &mut ResultTable,
) -> Result<(), HarnessError> {
    let factors: Vec<Option<DownsampleFactor>> = match loaded.variant {
        TrainVariant::Hr => vec![None],
        TrainVariant::JointOa => s_eval.iter().copied().map(Some).collect(),
        _ => vec![loaded.variant.eval_factor()],
    };
    for s in factors {
        let per_seq = predict_sequences(
            &loaded.recognizer,
            loaded.frontend.as_ref(),
            test,
            s,
            CodingPipeline::Plain,
        )
        .map_err(|source| HarnessError::Train {
            variant: loaded.variant.tag(),
            source,
        })?;
        let (report, degenerate) = match concat_eval(&per_seq) {
            Ok(r) => (r, false),
            Err(emosr_core::metrics::MetricsError::Degenerate(_)) => {
                let n = per_seq.iter().map(|(p, _)| p.len()).sum();
                let flat: Vec<(Vec<f64>, Vec<f64>)> = per_seq.clone();
                let rmse = rmse_of(&flat);
                (
                    emosr_core::metrics::MetricsReport {
                        rmse,
                        cc: 0.0,
                        ccc: 0.0,
                        n,
                    },
                    true,
                )
            }
            Err(e) => return Err(e.into()),
        };
        table.rows.push(ResultRow {
            variant: loaded.variant.tag(),
            s: s.map(|f| f.value()),
            qp: None,
            bpp: None,
            rmse: report.rmse,
            cc: report.cc,
            ccc: report.ccc,
            n: report.n,
            degenerate,
        });
    }
    Ok(())
}

fn rmse_of(seqs: &[(Vec<f64>, Vec<f64>)]) -> f64 {
    let mut sse = 0.0;
    let mut n = 0usize;
    for (p, l) in seqs {
        for (a, b) in p.iter().zip(l) {
            sse += (a - b) * (a - b);
            n += 1;
        }
    }
    (sse / n.max(1) as f64).sqrt()
}

/// Rate-distortion audit trail.
#[derive(Clone, Copy, Debug, Default)]
pub struct RdAudit {
    /// Optimizer steps taken during the sweep. The sweep path has no access
    /// to the optimizer, so anything but zero is a bug.
    pub optimizer_steps: u64,
}

/// Runs the rate-distortion protocol for one loaded variant at one factor:
/// the uncompressed reference row plus one row per qp, without any training.
pub fn rd_variant<S: Scalar>(
    loaded: &LoadedVariant<S>,
    test: &[LabeledSequence],
    s: DownsampleFactor,
    qp_list: &[u8],
    table: &mut ResultTable,
) -> Result<RdAudit, HarnessError> {
    // Uncompressed reference row.
    eval_variant_at(loaded, test, Some(s), table)?;
    let mut ws = Workspace::new();
    let recognizer = &loaded.recognizer;
    let frontend = loaded.frontend.as_ref();
    let points = rd_sweep(test, s, qp_list, |frame| {
        let input = match frontend {
            Some(sr) => emosr_core::image::normalize(
                &sr.reconstruct(frame, &mut ws).expect("96x96 by construction"),
            ),
            None => frame.clone(),
        };
        recognizer
            .predict(&input, &mut ws)
            .expect("96x96 by construction")
    })?;
    for p in points {
        table.rows.push(ResultRow {
            variant: loaded.variant.tag(),
            s: Some(p.s.value()),
            qp: Some(p.qp),
            bpp: Some(p.bpp),
            rmse: p.rmse,
            cc: p.cc,
            ccc: p.ccc,
            n: p.n,
            degenerate: p.degenerate,
        });
    }
    Ok(RdAudit { optimizer_steps: 0 })
}

fn eval_variant_at<S: Scalar>(
    loaded: &LoadedVariant<S>,
    test: &[LabeledSequence],
    s: Option<DownsampleFactor>,
    table: &mut ResultTable,
) -> Result<(), HarnessError> {
    let per_seq = predict_sequences(
        &loaded.recognizer,
        loaded.frontend.as_ref(),
        test,
        s,
        CodingPipeline::Plain,
    )
    .map_err(|source| HarnessError::Train {
        variant: loaded.variant.tag(),
        source,
    })?;
    let (report, degenerate) = match concat_eval(&per_seq) {
        Ok(r) => (r, false),
        Err(emosr_core::metrics::MetricsError::Degenerate(_)) => {
            let n = per_seq.iter().map(|(p, _)| p.len()).sum();
            (
                emosr_core::metrics::MetricsReport {
                    rmse: rmse_of(&per_seq),
                    cc: 0.0,
                    ccc: 0.0,
                    n,
                },
                true,
            )
        }
        Err(e) => return Err(e.into()),
    };
    table.rows.push(ResultRow {
        variant: loaded.variant.tag(),
        s: s.map(|f| f.value()),
        qp: None,
        bpp: None,
        rmse: report.rmse,
        cc: report.cc,
        ccc: report.ccc,
        n: report.n,
        degenerate,
    });
    Ok(())
}

/// Trains (or loads) and evaluates every planned variant for every seed.
/// Writes `results_seed<k>.csv` and `report_seed<k>.md` under `out` and
/// returns the per-seed tables in seed order.
pub fn run_plan<S: Scalar>(plan: &Plan, out: &Path) -> Result<Vec<(u64, ResultTable)>, HarnessError> {
    let (train, val, test) = prepare_corpus(plan)?;
    let mut all = Vec::new();
    for &seed in &plan.seeds {
        let mut table = ResultTable::default();
        for &variant in &plan.variants {
            let loaded = train_or_load::<S>(variant, &train, &val, plan, seed, out)?;
            eval_variant(&loaded, &test, &plan.s_eval, &mut table)?;
        }
        let csv = table.to_csv(seed, None);
        let path = out.join(format!("results_seed{seed}.csv"));
        fs::write(&path, csv).map_err(io_err(&path))?;
        let md = table.to_markdown();
        let path = out.join(format!("report_seed{seed}.md"));
        fs::write(&path, md).map_err(io_err(&path))?;
        all.push((seed, table));
    }
    Ok(all)
}

/// Runs the rate-distortion protocol over every planned variant that has
/// an evaluation factor (the one-for-all model sweeps every factor in
/// `s_eval`). Requires checkpoints from a previous `run_plan`/train.
pub fn run_rd<S: Scalar>(
    plan: &Plan,
    out: &Path,
) -> Result<Vec<(u64, ResultTable, RdAudit)>, HarnessError> {
    let (_, _, test) = prepare_corpus(plan)?;
    let mut all = Vec::new();
    for &seed in &plan.seeds {
        let mut table = ResultTable::default();
        let mut audit = RdAudit::default();
        for &variant in &plan.variants {
            let factors: Vec<DownsampleFactor> = match variant {
                TrainVariant::Hr => continue,
                TrainVariant::JointOa => plan.s_eval.clone(),
                _ => vec![variant.eval_factor().expect("single-factor variant")],
            };
            let loaded = load_checkpointed::<S>(variant, seed, out)?;
            for s in factors {
                let a = rd_variant(&loaded, &test, s, &plan.qp_list, &mut table)?;
                audit.optimizer_steps += a.optimizer_steps;
            }
        }
        let csv = table.to_csv(
            seed,
            Some(&format!("optimizer_steps={}", audit.optimizer_steps)),
        );
        let path = out.join(format!("rd_seed{seed}.csv"));
        fs::write(&path, csv).map_err(io_err(&path))?;
        all.push((seed, table, audit));
    }
    Ok(all)
}

/// Standalone SR pretraining at one factor: trains on the plan corpus's
/// training split, writes the checkpoint and the loss curve, and returns
/// the checkpoint path.
pub fn run_pretrain<S: Scalar>(
    plan: &Plan,
    out: &Path,
    s: DownsampleFactor,
    seed: u64,
) -> Result<PathBuf, HarnessError> {
    use emosr_core::training::{pretrain_srfcn, sr_pairs, PretrainConfig};
    let (train, _, _) = prepare_corpus(plan)?;
    let mut log = PipelineLog::new();
    let pairs = sr_pairs(&train, s, &mut log);
    let outcome = pretrain_srfcn::<S>(
        &pairs,
        &PretrainConfig {
            iterations: plan.recipe.pretrain_iterations,
            lr: plan.recipe.pretrain_lr,
            s_pretrain: s,
        },
        &plan.recipe.sgd,
        plan.recipe.pretrain_batch,
        seed,
    )
    .map_err(|source| HarnessError::Train {
        variant: format!("pretrain-s{s}"),
        source,
    })?;

    let ckpt_dir = out.join("checkpoints");
    fs::create_dir_all(&ckpt_dir).map_err(io_err(&ckpt_dir))?;
    let logs_dir = out.join("logs");
    fs::create_dir_all(&logs_dir).map_err(io_err(&logs_dir))?;
    let meta = CheckpointMeta {
        seed,
        phase: "pretrain".into(),
        variant: format!("SR-{s}"),
        iterations: outcome.optimizer_steps,
        s_mix: Vec::new(),
    };
    let path = ckpt_dir.join(format!("srfcn_s{s}_seed{seed}.ckpt"));
    fs::write(&path, encode_network(&outcome.model.net, &meta)).map_err(io_err(&path))?;
    let mut csv = String::from("iteration,loss\n");
    for (i, l) in outcome.loss_curve.iter().enumerate() {
        writeln!(csv, "{i},{l:.6}").unwrap();
    }
    let curve = logs_dir.join(format!("srfcn_s{s}_seed{seed}_pretrain.csv"));
    fs::write(&curve, csv).map_err(io_err(&curve))?;
    Ok(path)
}

pub fn run_pretrain_dyn(
    plan: &Plan,
    out: &Path,
    s: DownsampleFactor,
    seed: u64,
) -> Result<PathBuf, HarnessError> {
    match plan.dtype {
        Dtype::F32 => run_pretrain::<f32>(plan, out, s, seed),
        Dtype::F64 => run_pretrain::<f64>(plan, out, s, seed),
    }
}

/// Trains (or reuses) checkpoints for the planned variants without
/// evaluating. `only`, when non-empty, restricts to those variant tags.
pub fn run_train<S: Scalar>(
    plan: &Plan,
    out: &Path,
    only: &[TrainVariant],
) -> Result<(), HarnessError> {
    let (train, val, _) = prepare_corpus(plan)?;
    for &seed in &plan.seeds {
        for &variant in &plan.variants {
            if !only.is_empty() && !only.contains(&variant) {
                continue;
            }
            train_or_load::<S>(variant, &train, &val, plan, seed, out)?;
        }
    }
    Ok(())
}

/// Evaluates existing checkpoints only; never trains.
pub fn run_eval<S: Scalar>(plan: &Plan, out: &Path) -> Result<Vec<(u64, ResultTable)>, HarnessError> {
    let (_, _, test) = prepare_corpus(plan)?;
    let mut all = Vec::new();
    for &seed in &plan.seeds {
        let mut table = ResultTable::default();
        for &variant in &plan.variants {
            let loaded = load_checkpointed::<S>(variant, seed, out)?;
            eval_variant(&loaded, &test, &plan.s_eval, &mut table)?;
        }
        let csv = table.to_csv(seed, None);
        let path = out.join(format!("results_seed{seed}.csv"));
        fs::write(&path, csv).map_err(io_err(&path))?;
        let md = table.to_markdown();
        let path = out.join(format!("report_seed{seed}.md"));
        fs::write(&path, md).map_err(io_err(&path))?;
        all.push((seed, table));
    }
    Ok(all)
}

/// Dispatches on the plan's element type.
pub fn run_plan_dyn(plan: &Plan, out: &Path) -> Result<Vec<(u64, ResultTable)>, HarnessError> {
    match plan.dtype {
        Dtype::F32 => run_plan::<f32>(plan, out),
        Dtype::F64 => run_plan::<f64>(plan, out),
    }
}

pub fn run_train_dyn(plan: &Plan, out: &Path, only: &[TrainVariant]) -> Result<(), HarnessError> {
    match plan.dtype {
        Dtype::F32 => run_train::<f32>(plan, out, only),
        Dtype::F64 => run_train::<f64>(plan, out, only),
    }
}

pub fn run_eval_dyn(plan: &Plan, out: &Path) -> Result<Vec<(u64, ResultTable)>, HarnessError> {
    match plan.dtype {
        Dtype::F32 => run_eval::<f32>(plan, out),
        Dtype::F64 => run_eval::<f64>(plan, out),
    }
}

pub fn run_rd_dyn(
    plan: &Plan,
    out: &Path,
) -> Result<Vec<(u64, ResultTable, RdAudit)>, HarnessError> {
    match plan.dtype {
        Dtype::F32 => run_rd::<f32>(plan, out),
        Dtype::F64 => run_rd::<f64>(plan, out),
    }
}
