//! Training recipes: SR pretraining, joint fine-tuning of the transplanted
//! recognizer with a plateau learning-rate schedule, the max-mix recipe that
//! yields the one-for-all model, and the five comparison variants.
//!
//! Every run is a deterministic function of (variant, seed, corpus): model
//! init, shuffling, dropout and mixture draws all come from sub-seeds
//! derived from the run seed, and all reductions are sequential.

use thiserror::Error;

use crate::data::{
    hr_inputs, make_pairs, CodingPipeline, DataError, LabeledSequence, PairTarget, PipelineLog,
    TargetKind,
};
use crate::image::{normalize, DownsampleFactor, Frame, ImageError};
use crate::metrics::{report_or_degenerate, MetricsError, SeriesPair};
use crate::models::{
    build_emocnn, build_srfcn, frames_to_batch, transplant, EmoCnn, ModelError, SrFcn,
    TRANSPLANT_LR_SCALE,
};
use crate::nn::{mse_loss, sgd_step, NnError, SgdConfig, Velocity, Workspace};
use crate::rng::SeededRng;
use crate::tensor::{Scalar, Tensor};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("{which} dataset is empty")]
    EmptyDataset { which: &'static str },
    #[error("training diverged in {phase} at iteration {iteration}: loss {loss}")]
    Diverged {
        phase: &'static str,
        iteration: usize,
        loss: f64,
    },
    #[error("unknown variant tag {0:?}")]
    UnknownVariant(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

/// The five comparison protocols.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TrainVariant {
    /// Train and test on full-resolution frames.
    Hr,
    /// Train and test on degraded frames at one factor, random init.
    Lr(DownsampleFactor),
    /// Frozen SR front end, separate recognizer trained on reconstructions.
    NonJoint(DownsampleFactor),
    /// SR pretraining, transplant, joint fine-tune, all at one factor.
    Joint(DownsampleFactor),
    /// Max-mix: pretrain at the maximum factor, fine-tune on a mixture.
    JointOa,
}

impl TrainVariant {
    pub fn tag(&self) -> String {
        match self {
            TrainVariant::Hr => "HR".into(),
            TrainVariant::Lr(s) => format!("LR-{s}"),
            TrainVariant::NonJoint(s) => format!("NonJoint-{s}"),
            TrainVariant::Joint(s) => format!("Joint-{s}"),
            TrainVariant::JointOa => "Joint-OA".into(),
        }
    }

    pub fn parse(tag: &str) -> Result<Self, TrainError> {
        let bad = || TrainError::UnknownVariant(tag.to_string());
        if tag.eq_ignore_ascii_case("HR") {
            return Ok(TrainVariant::Hr);
        }
        if tag.eq_ignore_ascii_case("Joint-OA") {
            return Ok(TrainVariant::JointOa);
        }
        let (kind, s) = tag.split_once('-').ok_or_else(bad)?;
        let s: usize = s.parse().map_err(|_| bad())?;
        let s = DownsampleFactor::new(s).map_err(|_| bad())?;
        match kind.to_ascii_lowercase().as_str() {
            "lr" => Ok(TrainVariant::Lr(s)),
            "nonjoint" => Ok(TrainVariant::NonJoint(s)),
            "joint" => Ok(TrainVariant::Joint(s)),
            _ => Err(bad()),
        }
    }

    /// The factor the variant is evaluated at, if it is single-factor.
    pub fn eval_factor(&self) -> Option<DownsampleFactor> {
        match self {
            TrainVariant::Hr | TrainVariant::JointOa => None,
            TrainVariant::Lr(s) | TrainVariant::NonJoint(s) | TrainVariant::Joint(s) => Some(*s),
        }
    }
}

impl std::fmt::Display for TrainVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.tag())
    }
}

/// SR pretraining settings. The full recipe runs 30,000 iterations at a
/// constant 0.01 learning rate.
#[derive(Clone, Debug)]
pub struct PretrainConfig {
    pub iterations: usize,
    pub lr: f64,
    pub s_pretrain: DownsampleFactor,
}

impl PretrainConfig {
    pub fn new(s_pretrain: DownsampleFactor) -> Self {
        PretrainConfig {
            iterations: 30_000,
            lr: 0.01,
            s_pretrain,
        }
    }
}

/// Fine-tuning settings. Fresh layers train at `lr_new`; transplanted
/// layers at a tenth of it (via their 0.1 layer scale). When validation CCC
/// stops improving by more than `improvement_threshold` for
/// `plateau_patience` consecutive epochs, every rate is divided by
/// `lr_drop_factor`; the second plateau stops training.
#[derive(Clone, Debug)]
pub struct FinetuneConfig {
    pub lr_new: f64,
    pub plateau_patience: usize,
    pub improvement_threshold: f64,
    pub lr_drop_factor: f64,
    pub max_epochs: usize,
    pub s_mix: Vec<DownsampleFactor>,
}

impl Default for FinetuneConfig {
    fn default() -> Self {
        FinetuneConfig {
            lr_new: 0.01,
            plateau_patience: 3,
            improvement_threshold: 1e-4,
            lr_drop_factor: 10.0,
            max_epochs: 60,
            s_mix: vec![
                DownsampleFactor::new(3).unwrap(),
                DownsampleFactor::new(4).unwrap(),
                DownsampleFactor::new(6).unwrap(),
            ],
        }
    }
}

impl FinetuneConfig {
    /// Initial learning rate of transplanted layers: lr_new / 10.
    pub fn lr_pretrained(&self) -> f64 {
        self.lr_new * TRANSPLANT_LR_SCALE
    }
}

/// Everything a variant run needs. Defaults are the full-scale recipe;
/// `with_budget_scale` shrinks iteration counts for desk-scale runs while
/// keeping one code path.
#[derive(Clone, Debug)]
pub struct RecipeConfig {
    pub sgd: SgdConfig,
    pub pretrain_batch: usize,
    pub pretrain_iterations: usize,
    pub pretrain_lr: f64,
    pub finetune: FinetuneConfig,
    /// Pretraining factor for the one-for-all model: the maximum of the
    /// supported range.
    pub s_pretrain_oa: DownsampleFactor,
}

impl Default for RecipeConfig {
    fn default() -> Self {
        RecipeConfig {
            sgd: SgdConfig::default(),
            pretrain_batch: 128,
            pretrain_iterations: 30_000,
            pretrain_lr: 0.01,
            finetune: FinetuneConfig::default(),
            s_pretrain_oa: DownsampleFactor::new(16).unwrap(),
        }
    }
}

impl RecipeConfig {
    /// Scales the iteration budgets by one factor; learning rates and the
    /// schedule rules are untouched.
    pub fn with_budget_scale(mut self, scale: f64) -> Self {
        self.pretrain_iterations =
            ((self.pretrain_iterations as f64 * scale).round() as usize).max(1);
        self.finetune.max_epochs =
            ((self.finetune.max_epochs as f64 * scale).round() as usize).max(2);
        self
    }
}

/// One line of the per-epoch training log.
#[derive(Clone, Copy, Debug)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_rmse: f64,
    pub val_cc: f64,
    pub val_ccc: f64,
    /// Phase rate of freshly initialized layers.
    pub lr_fresh: f64,
    /// Rate any transplanted layer receives: always 0.1 * lr_fresh.
    pub lr_transplanted: f64,
    /// True when this epoch ended with a plateau-triggered rate drop.
    pub dropped_lr: bool,
    pub val_degenerate: bool,
}

/// Result of SR pretraining.
pub struct PretrainOutcome<S: Scalar> {
    pub model: SrFcn<S>,
    pub loss_curve: Vec<f64>,
    pub optimizer_steps: u64,
}

/// Deterministic sub-seed derivation (splitmix64 finalizer).
fn subseed(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn batch_targets_sr<S: Scalar>(targets: &[&Frame]) -> Tensor<S> {
    frames_to_batch::<S>(targets).expect("targets validated at pair construction")
}

/// Trains the reconstruction network on (degraded input, normalized HR)
/// pairs with a constant learning rate. Shuffles each pass; stops after the
/// configured number of optimizer steps.
pub fn pretrain_srfcn<S: Scalar>(
    pairs: &[(Frame, Frame)],
    cfg: &PretrainConfig,
    sgd: &SgdConfig,
    batch: usize,
    seed: u64,
) -> Result<PretrainOutcome<S>, TrainError> {
    if pairs.is_empty() {
        return Err(TrainError::EmptyDataset { which: "pretrain" });
    }
    let mut model = build_srfcn::<S>(subseed(seed, 1));
    let mut shuffle = SeededRng::new(subseed(seed, 2));
    let mut vel = Velocity::zeros_like(&model.net);
    let mut ws = Workspace::new();
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    let mut loss_curve = Vec::with_capacity(cfg.iterations);
    let mut steps = 0u64;

    'outer: loop {
        shuffle.shuffle(&mut order);
        for chunk in order.chunks(batch.max(1)) {
            if loss_curve.len() >= cfg.iterations {
                break 'outer;
            }
            let inputs: Vec<&Frame> = chunk.iter().map(|&i| &pairs[i].0).collect();
            let targets: Vec<&Frame> = chunk.iter().map(|&i| &pairs[i].1).collect();
            let x = frames_to_batch::<S>(&inputs)?;
            let t = batch_targets_sr::<S>(&targets);
            let trace = model.net.forward_traced(&x, None, &mut ws)?;
            let (loss, grad) = mse_loss(trace.output(), &t).map_err(|e| match e {
                NnError::NonFiniteLoss(l) => TrainError::Diverged {
                    phase: "pretrain",
                    iteration: loss_curve.len(),
                    loss: l,
                },
                other => TrainError::Nn(other),
            })?;
            let (_, grads) = model.net.backward(&trace, grad, &mut ws)?;
            sgd_step(&mut model.net, &grads, &mut vel, sgd, cfg.lr);
            loss_curve.push(loss);
            steps += 1;
        }
    }
    Ok(PretrainOutcome {
        model,
        loss_curve,
        optimizer_steps: steps,
    })
}

/// One mixture option of a recognition training set: every sample degraded
/// the same way. Single-factor runs have exactly one option.
pub struct MixOption {
    /// Downsampling factor, or None for the HR path.
    pub s: Option<usize>,
    pub inputs: Vec<Frame>,
}

/// Validation data: already-degraded inputs with labels.
pub struct EvalSet {
    pub inputs: Vec<Frame>,
    pub labels: Vec<f64>,
}

/// Outcome of recognizer training (any variant).
pub struct FinetuneOutcome<S: Scalar> {
    pub model: EmoCnn<S>,
    pub epochs: Vec<EpochRecord>,
    pub optimizer_steps: u64,
    /// Per-epoch draw counts per mixture option.
    pub mix_counts: Vec<Vec<u64>>,
}

/// Epoch-driven SGD over a (possibly mixed) recognition set with the
/// plateau schedule. Per-sample mixture options are drawn uniformly from a
/// seeded stream; validation CCC drives the schedule.
pub fn train_recognizer<S: Scalar>(
    mut model: EmoCnn<S>,
    options: &[MixOption],
    labels: &[f64],
    val: &EvalSet,
    cfg: &FinetuneConfig,
    sgd: &SgdConfig,
    seed: u64,
) -> Result<FinetuneOutcome<S>, TrainError> {
    if options.is_empty() || labels.is_empty() {
        return Err(TrainError::EmptyDataset { which: "train" });
    }
    if val.inputs.is_empty() {
        return Err(TrainError::EmptyDataset { which: "validation" });
    }
    for opt in options {
        debug_assert_eq!(opt.inputs.len(), labels.len());
    }

    let n = labels.len();
    let mut shuffle = SeededRng::new(subseed(seed, 3));
    let mut dropout = SeededRng::new(subseed(seed, 4));
    let mut mix = SeededRng::new(subseed(seed, 5));
    let mut vel = Velocity::zeros_like(&model.net);
    let mut ws = Workspace::new();
    let mut order: Vec<usize> = (0..n).collect();

    let mut phase_lr = cfg.lr_new;
    let mut drops = 0usize;
    let mut best_ccc = f64::NEG_INFINITY;
    let mut stale = 0usize;
    let mut steps = 0u64;
    let mut epochs = Vec::new();
    let mut mix_counts = Vec::new();

    for epoch in 0..cfg.max_epochs {
        shuffle.shuffle(&mut order);
        let choices: Vec<usize> = if options.len() == 1 {
            vec![0; n]
        } else {
            (0..n).map(|_| mix.below(options.len())).collect()
        };
        let mut counts = vec![0u64; options.len()];
        for &c in &choices {
            counts[c] += 1;
        }

        let mut loss_sum = 0.0;
        for chunk in order.chunks(sgd.batch_size.max(1)) {
            let inputs: Vec<&Frame> = chunk
                .iter()
                .map(|&i| &options[choices[i]].inputs[i])
                .collect();
            let x = frames_to_batch::<S>(&inputs)?;
            let t = Tensor::from_vec_unchecked(
                vec![chunk.len(), 1],
                chunk.iter().map(|&i| S::from_f64(labels[i])).collect(),
            );
            let trace = model.net.forward_traced(&x, Some(&mut dropout), &mut ws)?;
            let (loss, grad) = mse_loss(trace.output(), &t).map_err(|e| match e {
                NnError::NonFiniteLoss(l) => TrainError::Diverged {
                    phase: "finetune",
                    iteration: steps as usize,
                    loss: l,
                },
                other => TrainError::Nn(other),
            })?;
            let (_, grads) = model.net.backward(&trace, grad, &mut ws)?;
            sgd_step(&mut model.net, &grads, &mut vel, sgd, phase_lr);
            loss_sum += loss * chunk.len() as f64;
            steps += 1;
        }

        let preds = predict_frames(&model, &val.inputs, &mut ws)?;
        let (val_report, val_degenerate) =
            report_or_degenerate(&SeriesPair::new(&preds, &val.labels)?)?;

        // Plateau rule: fires iff best CCC has not improved by more than the
        // threshold for `plateau_patience` consecutive epochs.
        let mut dropped = false;
        if val_report.ccc > best_ccc + cfg.improvement_threshold {
            best_ccc = val_report.ccc;
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.plateau_patience {
                drops += 1;
                phase_lr /= cfg.lr_drop_factor;
                stale = 0;
                dropped = true;
            }
        }

        epochs.push(EpochRecord {
            epoch,
            train_loss: loss_sum / n as f64,
            val_rmse: val_report.rmse,
            val_cc: val_report.cc,
            val_ccc: val_report.ccc,
            lr_fresh: if dropped {
                phase_lr * cfg.lr_drop_factor
            } else {
                phase_lr
            },
            lr_transplanted: (if dropped {
                phase_lr * cfg.lr_drop_factor
            } else {
                phase_lr
            }) * TRANSPLANT_LR_SCALE,
            dropped_lr: dropped,
            val_degenerate,
        });
        mix_counts.push(counts);

        // Training stops after the second plateau.
        if drops >= 2 {
            break;
        }
    }

    Ok(FinetuneOutcome {
        model,
        epochs,
        optimizer_steps: steps,
        mix_counts,
    })
}

/// Eval-mode predictions for a list of frames, batched for GEMM efficiency.
pub fn predict_frames<S: Scalar>(
    model: &EmoCnn<S>,
    frames: &[Frame],
    ws: &mut Workspace<S>,
) -> Result<Vec<f64>, TrainError> {
    let mut preds = Vec::with_capacity(frames.len());
    for chunk in frames.chunks(32) {
        let refs: Vec<&Frame> = chunk.iter().collect();
        preds.extend(model.predict_batch(&refs, ws)?);
    }
    Ok(preds)
}

/// Extracts reconstruction pairs for SR pretraining from whole sequences.
pub fn sr_pairs(
    seqs: &[LabeledSequence],
    s: DownsampleFactor,
    log: &mut PipelineLog,
) -> Vec<(Frame, Frame)> {
    let mut pairs = Vec::new();
    for seq in seqs {
        for (input, target) in make_pairs(
            seq,
            s,
            CodingPipeline::Plain,
            TargetKind::Reconstruction,
            log,
        ) {
            let PairTarget::Reconstruction(t) = target else {
                unreachable!("requested reconstruction targets")
            };
            pairs.push((input, t));
        }
    }
    pairs
}

/// Extracts (degraded input, valence) samples from whole sequences.
pub fn valence_samples(
    seqs: &[LabeledSequence],
    s: DownsampleFactor,
    log: &mut PipelineLog,
) -> (Vec<Frame>, Vec<f64>) {
    let mut inputs = Vec::new();
    let mut labels = Vec::new();
    for seq in seqs {
        for (input, target) in
            make_pairs(seq, s, CodingPipeline::Plain, TargetKind::Valence, log)
        {
            let PairTarget::Valence(v) = target else {
                unreachable!("requested valence targets")
            };
            inputs.push(input);
            labels.push(v);
        }
    }
    (inputs, labels)
}

fn hr_samples(seqs: &[LabeledSequence], log: &mut PipelineLog) -> (Vec<Frame>, Vec<f64>) {
    let mut inputs = Vec::new();
    let mut labels = Vec::new();
    for seq in seqs {
        for (f, v) in hr_inputs(seq, log) {
            inputs.push(f);
            labels.push(v);
        }
    }
    (inputs, labels)
}

/// Maps degraded inputs through a frozen SR front end, re-normalizing the
/// reconstructions before they enter the recognizer.
fn through_frontend<S: Scalar>(
    sr: &SrFcn<S>,
    inputs: &[Frame],
) -> Result<Vec<Frame>, TrainError> {
    let mut ws = Workspace::new();
    inputs
        .iter()
        .map(|f| Ok(normalize(&sr.reconstruct(f, &mut ws)?)))
        .collect()
}

/// A fully trained comparison variant with its audit trail.
pub struct TrainedVariant<S: Scalar> {
    pub variant: TrainVariant,
    pub recognizer: EmoCnn<S>,
    /// Frozen SR front end; present only for NonJoint variants, whose eval
    /// path must route frames through it.
    pub frontend: Option<SrFcn<S>>,
    pub pretrain_curve: Vec<f64>,
    pub epochs: Vec<EpochRecord>,
    pub optimizer_steps: u64,
    pub mix_counts: Vec<Vec<u64>>,
    /// The `s` of each mixture option, aligned with `mix_counts` columns.
    pub mix_options: Vec<Option<usize>>,
}

/// Trains one comparison variant end to end.
pub fn train_variant<S: Scalar>(
    variant: TrainVariant,
    train_seqs: &[LabeledSequence],
    val_seqs: &[LabeledSequence],
    cfg: &RecipeConfig,
    seed: u64,
    log: &mut PipelineLog,
) -> Result<TrainedVariant<S>, TrainError> {
    if train_seqs.is_empty() {
        return Err(TrainError::EmptyDataset { which: "train" });
    }
    if val_seqs.is_empty() {
        return Err(TrainError::EmptyDataset { which: "validation" });
    }
    match variant {
        TrainVariant::Hr => {
            let (inputs, labels) = hr_samples(train_seqs, log);
            let (val_inputs, val_labels) = hr_samples(val_seqs, log);
            let model = build_emocnn::<S>(subseed(seed, 10));
            let out = train_recognizer(
                model,
                &[MixOption { s: None, inputs }],
                &labels,
                &EvalSet {
                    inputs: val_inputs,
                    labels: val_labels,
                },
                &cfg.finetune,
                &cfg.sgd,
                seed,
            )?;
            Ok(pack(variant, out, None, Vec::new(), vec![None]))
        }
        TrainVariant::Lr(s) => {
            let (inputs, labels) = valence_samples(train_seqs, s, log);
            let (val_inputs, val_labels) = valence_samples(val_seqs, s, log);
            let model = build_emocnn::<S>(subseed(seed, 10));
            let out = train_recognizer(
                model,
                &[MixOption {
                    s: Some(s.value()),
                    inputs,
                }],
                &labels,
                &EvalSet {
                    inputs: val_inputs,
                    labels: val_labels,
                },
                &cfg.finetune,
                &cfg.sgd,
                seed,
            )?;
            Ok(pack(variant, out, None, Vec::new(), vec![Some(s.value())]))
        }
        TrainVariant::Joint(s) => {
            let pairs = sr_pairs(train_seqs, s, log);
            let pre = pretrain_srfcn::<S>(
                &pairs,
                &PretrainConfig {
                    iterations: cfg.pretrain_iterations,
                    lr: cfg.pretrain_lr,
                    s_pretrain: s,
                },
                &cfg.sgd,
                cfg.pretrain_batch,
                seed,
            )?;
            let mut model = build_emocnn::<S>(subseed(seed, 10));
            transplant(&pre.model, &mut model)?;
            let (inputs, labels) = valence_samples(train_seqs, s, log);
            let (val_inputs, val_labels) = valence_samples(val_seqs, s, log);
            let out = train_recognizer(
                model,
                &[MixOption {
                    s: Some(s.value()),
                    inputs,
                }],
                &labels,
                &EvalSet {
                    inputs: val_inputs,
                    labels: val_labels,
                },
                &cfg.finetune,
                &cfg.sgd,
                seed,
            )?;
            let mut packed = pack(variant, out, None, pre.loss_curve, vec![Some(s.value())]);
            packed.optimizer_steps += pre.optimizer_steps;
            Ok(packed)
        }
        TrainVariant::NonJoint(s) => {
            let pairs = sr_pairs(train_seqs, s, log);
            let pre = pretrain_srfcn::<S>(
                &pairs,
                &PretrainConfig {
                    iterations: cfg.pretrain_iterations,
                    lr: cfg.pretrain_lr,
                    s_pretrain: s,
                },
                &cfg.sgd,
                cfg.pretrain_batch,
                seed,
            )?;
            // The SR network is frozen from here on: it never reaches the
            // optimizer, only this mapping step.
            let (raw_inputs, labels) = valence_samples(train_seqs, s, log);
            let inputs = through_frontend(&pre.model, &raw_inputs)?;
            let (raw_val, val_labels) = valence_samples(val_seqs, s, log);
            let val_inputs = through_frontend(&pre.model, &raw_val)?;
            let model = build_emocnn::<S>(subseed(seed, 10));
            let out = train_recognizer(
                model,
                &[MixOption {
                    s: Some(s.value()),
                    inputs,
                }],
                &labels,
                &EvalSet {
                    inputs: val_inputs,
                    labels: val_labels,
                },
                &cfg.finetune,
                &cfg.sgd,
                seed,
            )?;
            let mut packed = pack(
                variant,
                out,
                Some(pre.model),
                pre.loss_curve,
                vec![Some(s.value())],
            );
            packed.optimizer_steps += pre.optimizer_steps;
            Ok(packed)
        }
        TrainVariant::JointOa => train_maxmix(train_seqs, val_seqs, cfg, seed, log),
    }
}

/// The max-mix recipe: pretrain the SR network on pairs generated with the
/// maximum downsampling factor, transplant, then fine-tune on a seeded
/// uniform mixture over the configured factors. One checkpoint serves every
/// evaluation factor.
pub fn train_maxmix<S: Scalar>(
    train_seqs: &[LabeledSequence],
    val_seqs: &[LabeledSequence],
    cfg: &RecipeConfig,
    seed: u64,
    log: &mut PipelineLog,
) -> Result<TrainedVariant<S>, TrainError> {
    let pairs = sr_pairs(train_seqs, cfg.s_pretrain_oa, log);
    let pre = pretrain_srfcn::<S>(
        &pairs,
        &PretrainConfig {
            iterations: cfg.pretrain_iterations,
            lr: cfg.pretrain_lr,
            s_pretrain: cfg.s_pretrain_oa,
        },
        &cfg.sgd,
        cfg.pretrain_batch,
        seed,
    )?;
    let mut model = build_emocnn::<S>(subseed(seed, 10));
    transplant(&pre.model, &mut model)?;

    let mut options = Vec::new();
    let mut labels = Vec::new();
    let mut val_inputs = Vec::new();
    let mut val_labels = Vec::new();
    for (oi, &s) in cfg.finetune.s_mix.iter().enumerate() {
        let (inputs, l) = valence_samples(train_seqs, s, log);
        if oi == 0 {
            labels = l;
        }
        options.push(MixOption {
            s: Some(s.value()),
            inputs,
        });
        // Validation covers the whole mixture deterministically.
        let (vi, vl) = valence_samples(val_seqs, s, log);
        val_inputs.extend(vi);
        val_labels.extend(vl);
    }
    let out = train_recognizer(
        model,
        &options,
        &labels,
        &EvalSet {
            inputs: val_inputs,
            labels: val_labels,
        },
        &cfg.finetune,
        &cfg.sgd,
        seed,
    )?;
    let mix_options = cfg.finetune.s_mix.iter().map(|s| Some(s.value())).collect();
    let mut packed = pack(
        TrainVariant::JointOa,
        out,
        None,
        pre.loss_curve,
        mix_options,
    );
    packed.optimizer_steps += pre.optimizer_steps;
    Ok(packed)
}

fn pack<S: Scalar>(
    variant: TrainVariant,
    out: FinetuneOutcome<S>,
    frontend: Option<SrFcn<S>>,
    pretrain_curve: Vec<f64>,
    mix_options: Vec<Option<usize>>,
) -> TrainedVariant<S> {
    TrainedVariant {
        variant,
        recognizer: out.model,
        frontend,
        pretrain_curve,
        epochs: out.epochs,
        optimizer_steps: out.optimizer_steps,
        mix_counts: out.mix_counts,
        mix_options,
    }
}

/// Eval-mode predictions over whole sequences, one (predictions, labels)
/// pair per sequence. `s: None` is the HR path; a frontend routes inputs
/// through the frozen SR network first.
pub fn predict_sequences<S: Scalar>(
    recognizer: &EmoCnn<S>,
    frontend: Option<&SrFcn<S>>,
    seqs: &[LabeledSequence],
    s: Option<DownsampleFactor>,
    pipeline: CodingPipeline,
) -> Result<Vec<(Vec<f64>, Vec<f64>)>, TrainError> {
    let mut ws = Workspace::new();
    let mut out = Vec::with_capacity(seqs.len());
    for seq in seqs {
        let mut inputs = Vec::with_capacity(seq.len());
        for hr in &seq.frames {
            let input = match s {
                Some(s) => crate::data::degraded_input(hr, s, pipeline),
                None => normalize(hr),
            };
            let input = match frontend {
                Some(sr) => normalize(&sr.reconstruct(&input, &mut ws)?),
                None => input,
            };
            inputs.push(input);
        }
        let preds = predict_frames(recognizer, &inputs, &mut ws)?;
        out.push((preds, seq.valence.clone()));
    }
    Ok(out)
}

/// Optimizer-and-gradient sanity probe: gradient descent on a small fixed
/// subset until the eval-mode MSE drops below `target_mse` or the iteration
/// budget runs out. Dropout stays disabled so the objective is
/// deterministic. Returns (iterations used, final mse, loss curve).
pub fn overfit_probe<S: Scalar>(
    model: &mut EmoCnn<S>,
    inputs: &[Frame],
    labels: &[f64],
    sgd: &SgdConfig,
    lr: f64,
    max_iterations: usize,
    target_mse: f64,
) -> Result<(usize, f64, Vec<f64>), TrainError> {
    if inputs.is_empty() {
        return Err(TrainError::EmptyDataset { which: "overfit" });
    }
    let refs: Vec<&Frame> = inputs.iter().collect();
    let x = frames_to_batch::<S>(&refs)?;
    let t = Tensor::from_vec_unchecked(
        vec![labels.len(), 1],
        labels.iter().map(|&v| S::from_f64(v)).collect(),
    );
    let mut vel = Velocity::zeros_like(&model.net);
    let mut ws = Workspace::new();
    let mut curve = Vec::new();
    for it in 0..max_iterations {
        let trace = model.net.forward_traced(&x, None, &mut ws)?;
        let (loss, grad) = mse_loss(trace.output(), &t).map_err(|e| match e {
            NnError::NonFiniteLoss(l) => TrainError::Diverged {
                phase: "overfit",
                iteration: it,
                loss: l,
            },
            other => TrainError::Nn(other),
        })?;
        curve.push(loss);
        if loss < target_mse {
            return Ok((it, loss, curve));
        }
        let (_, grads) = model.net.backward(&trace, grad, &mut ws)?;
        sgd_step(&mut model.net, &grads, &mut vel, sgd, lr);
    }
    let last = *curve.last().expect("at least one iteration ran");
    Ok((max_iterations, last, curve))
}
