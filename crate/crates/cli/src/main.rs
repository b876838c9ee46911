//! `emosr`: train, evaluate and sweep the low bit rate emotion recognition
//! pipeline. All configuration lives in one plan file; flags override
//! individual fields.
//!
//! Exit codes: 0 success, 2 usage or configuration error, 3 data error,
//! 4 training failure.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use emosr_cli::corpus::write_corpus;
use emosr_cli::harness::{
    run_eval_dyn, run_plan_dyn, run_pretrain_dyn, run_rd_dyn, run_train_dyn, HarnessError,
    ResultTable,
};
use emosr_cli::pgm::BitDepth;
use emosr_cli::plan::{load_plan, resolve_out_root, Plan, PlanError};
use emosr_core::image::DownsampleFactor;
use emosr_core::synth::{gen_synthetic, SyntheticSpec};
use emosr_core::training::TrainVariant;

#[derive(Parser)]
#[command(name = "emosr", version, about = "Joint super-resolution and valence regression over simulated low bit rate video")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum DepthFlag {
    #[value(name = "8")]
    Eight,
    #[value(name = "16")]
    Sixteen,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum FormatFlag {
    Csv,
    Markdown,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic corpus on disk (PGM frames + labels.csv).
    GenData {
        /// Corpus root directory to create.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 27)]
        sequences: usize,
        #[arg(long, default_value_t = 300)]
        frames: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// Gaussian pixel noise level.
        #[arg(long, default_value_t = 0.01)]
        noise: f64,
        /// PGM bit depth.
        #[arg(long, value_enum, default_value = "16")]
        depth: DepthFlag,
    },
    /// Pretrain the SR network at one downsampling factor.
    PretrainSr {
        #[arg(long)]
        plan: PathBuf,
        /// Output root (overrides plan and EMOSR_OUT).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Downsampling factor for LR/HR pair generation.
        #[arg(long, default_value_t = 16)]
        s: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Train the plan's variants (writes checkpoints and logs).
    Train {
        #[arg(long)]
        plan: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Restrict to specific variant tags (repeatable).
        #[arg(long)]
        variant: Vec<String>,
    },
    /// Evaluate existing checkpoints into results tables (no training).
    Eval {
        #[arg(long)]
        plan: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train-or-load every variant, then evaluate (train + eval in one go).
    Run {
        #[arg(long)]
        plan: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Rate-distortion sweep over the plan's qp grid (requires checkpoints;
    /// performs no training).
    RdSweep {
        #[arg(long)]
        plan: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-render comparison tables and per-curve R-D files from results
    /// CSVs in the output directory.
    Report {
        #[arg(long)]
        plan: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "markdown")]
        format: FormatFlag,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Harness(#[from] HarnessError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("bad --s value: {0}")]
    BadFactor(String),
    #[error("bad --variant value: {0}")]
    BadVariant(String),
}

impl CliError {
    /// 2 usage/config, 3 data, 4 training.
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Plan(_) | CliError::BadFactor(_) | CliError::BadVariant(_) => 2,
            CliError::Harness(HarnessError::Train { .. }) => 4,
            CliError::Harness(_) | CliError::Io { .. } => 3,
        }
    }
}

fn ensure_dir(path: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(path).map_err(|source| CliError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn load(plan_path: &Path, out_flag: Option<&PathBuf>) -> Result<(Plan, PathBuf), CliError> {
    let plan = load_plan(plan_path)?;
    let out = resolve_out_root(out_flag.map(|p| p.as_path()), &plan);
    ensure_dir(&out)?;
    Ok((plan, out))
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.cmd {
        Cmd::GenData {
            out,
            sequences,
            frames,
            seed,
            noise,
            depth,
        } => {
            let spec = SyntheticSpec {
                n_sequences: sequences,
                frames_per_sequence: frames,
                seed,
                noise_level: noise,
            };
            let seqs = gen_synthetic(&spec);
            ensure_dir(&out)?;
            let depth = match depth {
                DepthFlag::Eight => BitDepth::Eight,
                DepthFlag::Sixteen => BitDepth::Sixteen,
            };
            write_corpus(&out, &seqs, depth).map_err(HarnessError::Corpus)?;
            println!(
                "wrote {} sequences x {} frames to {}",
                sequences,
                frames,
                out.display()
            );
            Ok(())
        }
        Cmd::PretrainSr { plan, out, s, seed } => {
            let (plan, out) = load(&plan, out.as_ref())?;
            let s = DownsampleFactor::new(s).map_err(|e| CliError::BadFactor(e.to_string()))?;
            let path = run_pretrain_dyn(&plan, &out, s, seed)?;
            println!("pretrained SR checkpoint: {}", path.display());
            Ok(())
        }
        Cmd::Train { plan, out, variant } => {
            let (plan, out) = load(&plan, out.as_ref())?;
            let only: Vec<TrainVariant> = variant
                .iter()
                .map(|t| TrainVariant::parse(t).map_err(|e| CliError::BadVariant(e.to_string())))
                .collect::<Result<_, _>>()?;
            run_train_dyn(&plan, &out, &only)?;
            println!("checkpoints under {}", out.join("checkpoints").display());
            Ok(())
        }
        Cmd::Eval { plan, out } => {
            let (plan, out) = load(&plan, out.as_ref())?;
            let tables = run_eval_dyn(&plan, &out)?;
            print_summary(&tables, &out);
            Ok(())
        }
        Cmd::Run { plan, out } => {
            let (plan, out) = load(&plan, out.as_ref())?;
            let tables = run_plan_dyn(&plan, &out)?;
            print_summary(&tables, &out);
            Ok(())
        }
        Cmd::RdSweep { plan, out } => {
            let (plan, out) = load(&plan, out.as_ref())?;
            let tables = run_rd_dyn(&plan, &out)?;
            for (seed, _, audit) in &tables {
                println!(
                    "seed {seed}: rd sweep complete, optimizer_steps={}",
                    audit.optimizer_steps
                );
            }
            println!("rd tables under {}", out.display());
            Ok(())
        }
        Cmd::Report { plan, out, format } => {
            let (plan, out) = load(&plan, out.as_ref())?;
            report(&plan, &out, format)
        }
    }
}

fn print_summary(tables: &[(u64, ResultTable)], out: &Path) {
    for (seed, table) in tables {
        println!("seed {seed}: {} result rows", table.rows.len());
    }
    println!("artifacts under {}", out.display());
}

/// Re-renders tables from the results/rd CSVs already on disk.
fn report(plan: &Plan, out: &Path, format: FormatFlag) -> Result<(), CliError> {
    let mut rendered = 0usize;
    for &seed in &plan.seeds {
        let results = out.join(format!("results_seed{seed}.csv"));
        if results.exists() {
            let table = ResultTable::from_csv(&results)?;
            match format {
                FormatFlag::Markdown => {
                    let path = out.join(format!("report_seed{seed}.md"));
                    std::fs::write(&path, table.to_markdown()).map_err(|source| CliError::Io {
                        path: path.display().to_string(),
                        source,
                    })?;
                    println!("wrote {}", path.display());
                }
                FormatFlag::Csv => {
                    let path = out.join(format!("report_seed{seed}.csv"));
                    std::fs::write(&path, table.to_csv(seed, None)).map_err(|source| {
                        CliError::Io {
                            path: path.display().to_string(),
                            source,
                        }
                    })?;
                    println!("wrote {}", path.display());
                }
            }
            rendered += 1;
        }
        // Per-curve R-D files: one CSV per (variant, s) so each curve plots
        // directly.
        let rd = out.join(format!("rd_seed{seed}.csv"));
        if rd.exists() {
            let table = ResultTable::from_csv(&rd)?;
            let dir = out.join("rd_curves");
            ensure_dir(&dir)?;
            let mut keys: Vec<(String, Option<usize>)> = Vec::new();
            for row in &table.rows {
                let key = (row.variant.clone(), row.s);
                if !keys.contains(&key) {
                    keys.push(key);
                }
            }
            for (variant, s) in keys {
                let mut csv = String::from("qp,bpp,rmse,cc,ccc,n\n");
                for row in table.rows.iter().filter(|r| r.variant == variant && r.s == s) {
                    writeln!(
                        csv,
                        "{},{},{:.6},{:.6},{:.6},{}",
                        row.qp.map(|q| q.to_string()).unwrap_or_default(),
                        row.bpp.map(|b| format!("{b:.6}")).unwrap_or_default(),
                        row.rmse,
                        row.cc,
                        row.ccc,
                        row.n
                    )
                    .unwrap();
                }
                let s_part = s.map(|v| format!("_s{v}")).unwrap_or_default();
                let path = dir.join(format!("{variant}{s_part}_seed{seed}.csv"));
                std::fs::write(&path, csv).map_err(|source| CliError::Io {
                    path: path.display().to_string(),
                    source,
                })?;
            }
            println!("wrote per-curve files under {}", dir.display());
            rendered += 1;
        }
    }
    if rendered == 0 {
        return Err(CliError::Harness(HarnessError::MissingCheckpoint {
            path: format!(
                "{}: no results_seed*.csv or rd_seed*.csv found",
                out.display()
            ),
        }));
    }
    Ok(())
}
