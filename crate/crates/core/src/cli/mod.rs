//! Command-line front end: `gen-data`, `train`, `eval`, `inspect-masks`.
//!
//! Exit codes: 0 success, 1 IO failure, 2 bad configuration or input,
//! 3 numerical failure during training.

pub mod config;
pub mod manifest;
pub mod model_file;

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

pub use config::{Ablation, RunConfig};
pub use manifest::Manifest;
pub use model_file::{load_model, save_model};

use crate::data::{self, Dataset};
use crate::error::{Error, Result};
use crate::modality::Modality;
use crate::model::Model;
use crate::training::{evaluate, Trainer, ZeroLabelPolicy};

#[derive(Debug, Parser)]
#[command(name = "modgate", version, about = "Modulated multimodal sentiment regression")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic JSONL dataset.
    GenData {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train a model and write it with its manifest into a directory.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// full | no-ml | no-mfm | no-be
        #[arg(long)]
        ablation: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Print metrics of a saved model on a dataset.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// exclude | negative
        #[arg(long, default_value = "exclude")]
        acc2_zero: String,
    },
    /// Dump per-utterance filter decisions as CSV.
    InspectMasks {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Io(_) => 1,
        Error::NonFinite { .. } => 3,
        _ => 2,
    }
}

fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    match path {
        Some(p) => RunConfig::parse(&fs::read_to_string(p)?),
        None => Ok(RunConfig::default()),
    }
}

fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn read_dataset(path: &Path) -> Result<(Dataset, String)> {
    let bytes = fs::read(path)?;
    let ds = data::parse_jsonl(bytes.as_slice())?;
    Ok((ds, manifest::content_hash(&bytes)))
}

pub fn gen_data(config: Option<&Path>, out: &Path, seed: Option<u64>) -> Result<Manifest> {
    let started_at = manifest::unix_now();
    let mut cfg = load_config(config)?;
    if let Some(s) = seed {
        cfg.synth.seed = s;
        cfg.train.seed = s;
    }
    let ds = data::generate_synthetic(&cfg.synth)?;
    let mut bytes = Vec::new();
    data::write_jsonl(&ds, &mut bytes)?;
    fs::write(out, &bytes)?;
    let m = Manifest {
        command: "gen-data".into(),
        ablation: cfg.ablation.as_str().into(),
        seed: cfg.synth.seed,
        dataset_hash: manifest::content_hash(&bytes),
        config: cfg,
        started_at,
        finished_at: manifest::unix_now(),
        metrics: None,
        mean_keep: None,
    };
    m.write(&sidecar(out, ".manifest.json"))?;
    Ok(m)
}

/// Trains on the training split and writes `model.bin`, `train.log` and
/// `manifest.json` into `out`. Test-split metrics go into the manifest.
pub fn train(
    config: Option<&Path>,
    data_path: &Path,
    out: &Path,
    ablation: Option<Ablation>,
    seed: Option<u64>,
    log: &mut dyn Write,
) -> Result<Manifest> {
    let started_at = manifest::unix_now();
    let mut cfg = load_config(config)?;
    if let Some(a) = ablation {
        cfg.ablation = a;
    }
    if let Some(s) = seed {
        cfg.train.seed = s;
    }
    let (ds, dataset_hash) = read_dataset(data_path)?;
    let (mut model_cfg, train_cfg) = cfg.resolved();
    model_cfg.input_dims = ds.feature_dims()?;
    let split = data::split(&ds, cfg.split, train_cfg.seed)?;
    fs::create_dir_all(out)?;

    let model = Model::new(model_cfg, train_cfg.seed)?;
    let mut trainer = Trainer::new(model, train_cfg.clone())?;
    let mut log_text = String::new();
    trainer.fit(&split, |e| {
        let _ = writeln!(log_text, "{e}");
        let _ = writeln!(log, "{e}");
    })?;
    let model = trainer.into_model();
    save_model(&model, out.join("model.bin"))?;
    fs::write(out.join("train.log"), log_text)?;

    let eval_set = if split.test.is_empty() { &ds } else { &split.test };
    let ev = evaluate(&model, eval_set, train_cfg.zero_label)?;
    writeln!(log, "{}", ev.metrics)?;
    let m = Manifest {
        command: "train".into(),
        ablation: cfg.ablation.as_str().into(),
        seed: train_cfg.seed,
        config: cfg,
        dataset_hash,
        started_at,
        finished_at: manifest::unix_now(),
        metrics: Some(ev.metrics),
        mean_keep: ev.mean_keep,
    };
    m.write(&out.join("manifest.json"))?;
    Ok(m)
}

fn load_compatible(model_path: &Path, data_path: &Path) -> Result<(Model, Dataset)> {
    let model = load_model(model_path)?;
    let ds = data::load_jsonl(data_path)?;
    if let Some(u) = ds.iter().next() {
        model.check_compatible(u)?;
    }
    Ok((model, ds))
}

/// Metrics as `key=value` lines, followed by `keep_<tag>` lines for
/// filtered models.
pub fn eval(model_path: &Path, data_path: &Path, policy: ZeroLabelPolicy) -> Result<String> {
    let (model, ds) = load_compatible(model_path, data_path)?;
    let ev = evaluate(&model, &ds, policy)?;
    let mut out = format!("{}\n", ev.metrics);
    if let Some(keep) = ev.mean_keep {
        for m in Modality::ALL {
            let _ = writeln!(out, "keep_{}={:.6}", m.tag(), keep[m.index()]);
        }
    }
    Ok(out)
}

/// Writes one CSV row per utterance and modality; returns the summary line.
pub fn inspect_masks(model_path: &Path, data_path: &Path, out: &Path) -> Result<String> {
    let (model, ds) = load_compatible(model_path, data_path)?;
    if model.mfm().is_none() {
        return Err(Error::Config("model has no filter".into()));
    }
    let ev = evaluate(&model, &ds, ZeroLabelPolicy::Exclude)?;
    let mut csv = String::from("utterance_id,modality,keep,replace,penalty\n");
    for (u, dec) in ds.iter().zip(&ev.decisions) {
        for m in Modality::ALL {
            let d = dec[m.index()];
            let _ = writeln!(csv, "{},{},{},{},{}", u.id, m.name(), d.keep, d.replace, d.penalty);
        }
    }
    fs::write(out, csv)?;
    let keep = ev.mean_keep.unwrap_or([1.0; 3]);
    Ok(format!(
        "mean_keep language={:.6} acoustic={:.6} visual={:.6}",
        keep[0], keep[1], keep[2]
    ))
}

fn dispatch(cli: Cli, stdout: &mut dyn Write) -> Result<()> {
    match cli.command {
        Command::GenData { config, out, seed } => {
            let m = gen_data(config.as_deref(), &out, seed)?;
            writeln!(stdout, "wrote {} utterances to {}", m.config.synth.size, out.display())?;
        }
        Command::Train {
            config,
            data,
            out,
            ablation,
            seed,
        } => {
            let ablation = ablation.as_deref().map(Ablation::parse).transpose()?;
            train(config.as_deref(), &data, &out, ablation, seed, stdout)?;
        }
        Command::Eval { model, data, acc2_zero } => {
            let policy = ZeroLabelPolicy::parse(&acc2_zero)?;
            write!(stdout, "{}", eval(&model, &data, policy)?)?;
        }
        Command::InspectMasks { model, data, out } => {
            writeln!(stdout, "{}", inspect_masks(&model, &data, &out)?)?;
        }
    }
    Ok(())
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = write!(stderr, "{e}");
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match dispatch(cli, stdout) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            exit_code(&e)
        }
    }
}
