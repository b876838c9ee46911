//! Experiment plan files: one TOML document configures the corpus, the
//! variants to train, evaluation factors, the qp sweep grid, seeds and the
//! iteration budget. CLI flags override individual fields.

use std::path::{Path, PathBuf};

use emosr_core::image::DownsampleFactor;
use emosr_core::synth::SyntheticSpec;
use emosr_core::training::{RecipeConfig, TrainVariant};
use serde::Deserialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PlanError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}: {detail}")]
    Parse { path: String, detail: String },
    #[error("plan has no variants")]
    NoVariants,
    #[error("unknown dtype {0:?} (expected \"f32\" or \"f64\")")]
    BadDtype(String),
    #[error("unknown variant tag {0:?}")]
    BadVariant(String),
    #[error("{0} is not a supported downsampling factor")]
    BadFactor(usize),
    #[error("qp {0} outside [0, 51]")]
    BadQp(u8),
    #[error("corpus kind \"path\" requires a path")]
    MissingCorpusPath,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PlanFile {
    out: Option<PathBuf>,
    #[serde(default = "default_dtype")]
    dtype: String,
    #[serde(default = "default_seeds")]
    seeds: Vec<u64>,
    #[serde(default = "default_budget_scale")]
    budget_scale: f64,
    variants: Vec<String>,
    #[serde(default = "default_s_eval")]
    s_eval: Vec<usize>,
    #[serde(default = "default_qp_list")]
    qp_list: Vec<u8>,
    corpus: CorpusFile,
    #[serde(default)]
    train: TrainFile,
}

fn default_dtype() -> String {
    "f64".into()
}
fn default_seeds() -> Vec<u64> {
    vec![1]
}
fn default_budget_scale() -> f64 {
    1.0
}
fn default_s_eval() -> Vec<usize> {
    vec![3, 4, 6, 8, 12, 16]
}
fn default_qp_list() -> Vec<u8> {
    vec![0, 8, 16, 24, 32, 40, 48]
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CorpusFile {
    #[serde(default = "default_corpus_kind")]
    kind: String,
    path: Option<PathBuf>,
    #[serde(default = "default_sequences")]
    sequences: usize,
    #[serde(default = "default_frames")]
    frames: usize,
    #[serde(default = "default_corpus_seed")]
    seed: u64,
    #[serde(default = "default_noise")]
    noise: f64,
    #[serde(default = "default_val_frac")]
    val_frac: f64,
    #[serde(default = "default_test_frac")]
    test_frac: f64,
}

fn default_corpus_kind() -> String {
    "synthetic".into()
}
fn default_sequences() -> usize {
    27
}
fn default_frames() -> usize {
    300
}
fn default_corpus_seed() -> u64 {
    7
}
fn default_noise() -> f64 {
    0.01
}
fn default_val_frac() -> f64 {
    0.15
}
fn default_test_frac() -> f64 {
    0.25
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct TrainFile {
    batch_size: Option<usize>,
    pretrain_batch: Option<usize>,
    pretrain_iterations: Option<usize>,
    max_epochs: Option<usize>,
    lr: Option<f64>,
    momentum: Option<f64>,
    weight_decay: Option<f64>,
    plateau_patience: Option<usize>,
    s_mix: Option<Vec<usize>>,
    s_pretrain_oa: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Dtype {
    F32,
    F64,
}

/// Where the corpus comes from.
#[derive(Clone, Debug)]
pub enum CorpusSource {
    Synthetic(SyntheticSpec),
    Path(PathBuf),
}

/// A fully validated experiment plan.
#[derive(Clone, Debug)]
pub struct Plan {
    pub out: Option<PathBuf>,
    pub dtype: Dtype,
    pub seeds: Vec<u64>,
    pub variants: Vec<TrainVariant>,
    pub s_eval: Vec<DownsampleFactor>,
    pub qp_list: Vec<u8>,
    pub corpus: CorpusSource,
    pub val_frac: f64,
    pub test_frac: f64,
    pub recipe: RecipeConfig,
}

pub fn load_plan(path: &Path) -> Result<Plan, PlanError> {
    let text = std::fs::read_to_string(path).map_err(|source| PlanError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let file: PlanFile = toml::from_str(&text).map_err(|e| PlanError::Parse {
        path: path.display().to_string(),
        detail: e.to_string(),
    })?;
    resolve(file)
}

fn factor(s: usize) -> Result<DownsampleFactor, PlanError> {
    DownsampleFactor::new(s).map_err(|_| PlanError::BadFactor(s))
}

fn resolve(file: PlanFile) -> Result<Plan, PlanError> {
    if file.variants.is_empty() {
        return Err(PlanError::NoVariants);
    }
    let dtype = match file.dtype.as_str() {
        "f32" => Dtype::F32,
        "f64" => Dtype::F64,
        other => return Err(PlanError::BadDtype(other.into())),
    };
    let variants = file
        .variants
        .iter()
        .map(|t| TrainVariant::parse(t).map_err(|_| PlanError::BadVariant(t.clone())))
        .collect::<Result<Vec<_>, _>>()?;
    let s_eval = file
        .s_eval
        .iter()
        .map(|&s| factor(s))
        .collect::<Result<Vec<_>, _>>()?;
    for &qp in &file.qp_list {
        if qp > 51 {
            return Err(PlanError::BadQp(qp));
        }
    }

    let corpus = match file.corpus.kind.as_str() {
        "synthetic" => CorpusSource::Synthetic(SyntheticSpec {
            n_sequences: file.corpus.sequences,
            frames_per_sequence: file.corpus.frames,
            seed: file.corpus.seed,
            noise_level: file.corpus.noise,
        }),
        "path" => CorpusSource::Path(
            file.corpus.path.clone().ok_or(PlanError::MissingCorpusPath)?,
        ),
        other => {
            return Err(PlanError::Parse {
                path: "corpus.kind".into(),
                detail: format!("unknown kind {other:?} (expected \"synthetic\" or \"path\")"),
            })
        }
    };

    // Full-scale recipe, scaled by the budget knob, then explicit overrides.
    let mut recipe = RecipeConfig::default().with_budget_scale(file.budget_scale);
    let t = &file.train;
    if let Some(b) = t.batch_size {
        recipe.sgd.batch_size = b;
    }
    recipe.pretrain_batch = t.pretrain_batch.unwrap_or(recipe.sgd.batch_size);
    if let Some(it) = t.pretrain_iterations {
        recipe.pretrain_iterations = it;
    }
    if let Some(e) = t.max_epochs {
        recipe.finetune.max_epochs = e;
    }
    if let Some(lr) = t.lr {
        recipe.pretrain_lr = lr;
        recipe.finetune.lr_new = lr;
        recipe.sgd.base_lr = lr;
    }
    if let Some(m) = t.momentum {
        recipe.sgd.momentum = m;
    }
    if let Some(wd) = t.weight_decay {
        recipe.sgd.weight_decay = wd;
    }
    if let Some(p) = t.plateau_patience {
        recipe.finetune.plateau_patience = p;
    }
    if let Some(mix) = &t.s_mix {
        recipe.finetune.s_mix = mix
            .iter()
            .map(|&s| factor(s))
            .collect::<Result<Vec<_>, _>>()?;
    }
    if let Some(s) = t.s_pretrain_oa {
        recipe.s_pretrain_oa = factor(s)?;
    }

    Ok(Plan {
        out: file.out,
        dtype,
        seeds: file.seeds,
        variants,
        s_eval,
        qp_list: file.qp_list,
        corpus,
        val_frac: file.corpus.val_frac,
        test_frac: file.corpus.test_frac,
        recipe,
    })
}

/// Resolves the output root: explicit flag, then plan field, then the
/// EMOSR_OUT environment variable, then ./emosr-out.
pub fn resolve_out_root(flag: Option<&Path>, plan: &Plan) -> PathBuf {
    if let Some(p) = flag {
        return p.to_path_buf();
    }
    if let Some(p) = &plan.out {
        return p.clone();
    }
    if let Ok(env) = std::env::var("EMOSR_OUT") {
        if !env.is_empty() {
            return PathBuf::from(env);
        }
    }
    PathBuf::from("emosr-out")
}
