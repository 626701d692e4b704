use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context};
use candle_core::Device;
use clap::{Args, Parser, Subcommand};

use leafnet::dataset::{
    load_manifest, manifest_hash, save_manifest, scan_dataset, stratified_split, LabeledPath, ScanOptions, Split,
};
use leafnet::evaluation::{argmax, predict_samples, read_report, PredictOptions, REPORT_JSON};
use leafnet::experiment::{
    class_summary, evaluate_checkpoint, run_experiment, ExperimentConfig, Overrides, RunFlags, DATASET_ROOT_ENV,
    EVALUATION_DIR,
};
use leafnet::model::load_checkpoint;

#[derive(Parser)]
#[command(name = "leafnet", version, about = "Apple leaf disease classifier: ingest, split, train, evaluate, predict")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment TOML file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Image folder root; falls back to the config, then $LEAFNET_DATASET_ROOT.
    #[arg(long, global = true)]
    dataset_root: Option<PathBuf>,
    /// Fail on unreadable or non-RGB images instead of skipping them.
    #[arg(long, global = true)]
    strict: bool,
    #[arg(long, global = true)]
    overwrite: bool,
    /// Average predictions over augmented views.
    #[arg(long, global = true)]
    tta: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Scan the dataset root and write an unsplit manifest.
    Ingest {
        #[arg(long, default_value = "manifest.tsv")]
        out: PathBuf,
    },
    /// Stratified train/val/test split of a manifest.
    Split {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train (and evaluate) every run the config describes.
    Train {
        #[arg(long)]
        resolution: Option<u32>,
        #[arg(long, conflicts_with = "no_augment")]
        augment: bool,
        #[arg(long)]
        no_augment: bool,
        #[arg(long)]
        freeze_backbone: bool,
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Score a checkpoint on a manifest split.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value = "test", value_parser = parse_split)]
        split: Split,
        #[arg(long)]
        out: PathBuf,
    },
    /// Classify individual images.
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(required = true)]
        images: Vec<PathBuf>,
    },
    /// Tabulate the evaluation reports of finished runs.
    Report {
        #[arg(required = true)]
        run_dirs: Vec<PathBuf>,
    },
}

fn parse_split(s: &str) -> Result<Split, String> {
    Split::parse(s).ok_or_else(|| format!("unknown split {s:?} (train, val, test)"))
}

fn load_config(common: &Common) -> anyhow::Result<ExperimentConfig> {
    Ok(match &common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    let common = &cli.common;
    let mut overrides = Overrides {
        seed: common.seed,
        tta: common.tta,
        dataset_root: common.dataset_root.clone(),
        ..Default::default()
    };
    match cli.command {
        Command::Ingest { out } => {
            let cfg = overrides.apply(load_config(common)?);
            let root = cfg
                .resolve_dataset_root(None)
                .with_context(|| format!("no dataset root: pass --dataset-root or set {DATASET_ROOT_ENV}"))?;
            let scan = scan_dataset(
                &root,
                ScanOptions {
                    strict: common.strict,
                    ..Default::default()
                },
            )?;
            for w in &scan.warnings {
                eprintln!("warning: {}: {}", w.path.display(), w.message);
            }
            save_manifest(&scan.manifest, &out)?;
            print!("{}", class_summary(&scan.manifest));
            println!("wrote {}", out.display());
        }
        Command::Split { manifest, out } => {
            let cfg = overrides.apply(load_config(common)?);
            let mut m = load_manifest(&manifest)?;
            if m.is_split() && !common.overwrite {
                bail!("{} is already split; pass --overwrite to re-split", manifest.display());
            }
            m.clear_splits();
            let split = stratified_split(&m, &cfg.split)?;
            let out = out.unwrap_or(manifest);
            save_manifest(&split, &out)?;
            print!("{}", class_summary(&split));
            println!("manifest sha256 {}", manifest_hash(&split)?);
            println!("wrote {}", out.display());
        }
        Command::Train {
            resolution,
            augment,
            no_augment,
            freeze_backbone,
            output_dir,
        } => {
            overrides.resolution = resolution;
            overrides.augment = match (augment, no_augment) {
                (true, _) => Some(true),
                (_, true) => Some(false),
                _ => None,
            };
            overrides.freeze_backbone = freeze_backbone;
            overrides.output_dir = output_dir;
            let cfg = overrides.apply(load_config(common)?);
            cfg.validate()?;
            let flags = RunFlags {
                overwrite: common.overwrite,
                strict: common.strict,
            };
            for run in cfg.expand() {
                let summary = run_experiment(&run, None, flags)
                    .with_context(|| format!("run {}", run.output_dir.display()))?;
                println!(
                    "{}: best epoch {} | {}",
                    summary.run_dir.display(),
                    summary.training.best_epoch,
                    summary.report.summary()
                );
            }
        }
        Command::Evaluate {
            checkpoint,
            manifest,
            split,
            out,
        } => {
            let cfg = overrides.apply(load_config(common)?);
            if out.exists() && out.read_dir()?.next().is_some() && !common.overwrite {
                bail!("{} is not empty; pass --overwrite", out.display());
            }
            let mut m = load_manifest(&manifest)?;
            if let Some(root) = &common.dataset_root {
                m = m.with_root(root);
            }
            let mut eval = cfg.evaluation.clone();
            eval.split = split;
            let report = evaluate_checkpoint(&checkpoint, &m, &eval, &cfg.predict_options(common.strict), &out)?;
            println!("{}", report.summary());
        }
        Command::Predict { checkpoint, images } => return predict(&checkpoint, &images, common),
        Command::Report { run_dirs } => report(&run_dirs)?,
    }
    Ok(ExitCode::SUCCESS)
}

fn predict(checkpoint: &Path, images: &[PathBuf], common: &Common) -> anyhow::Result<ExitCode> {
    let cfg = load_config(common)?;
    let (bundle, _) = load_checkpoint(checkpoint, &Device::Cpu)?;
    let samples: Arc<[LabeledPath]> = images
        .iter()
        .map(|p| LabeledPath {
            path: p.clone(),
            label: 0,
        })
        .collect();
    let mut opts: PredictOptions = cfg.predict_options(common.strict);
    opts.tta = cfg.tta().filter(|_| common.tta);
    // Per-file failures are reported below, so never abort the batch.
    opts.strict = false;
    let preds = predict_samples(&bundle, samples, &opts)?;
    let rows: HashMap<usize, &Vec<f32>> = preds.indices.iter().copied().zip(&preds.probs).collect();
    let failures: HashMap<&Path, &str> = preds
        .stats
        .failures
        .iter()
        .map(|(p, e)| (p.as_path(), e.as_str()))
        .collect();
    for (i, path) in images.iter().enumerate() {
        match rows.get(&i) {
            Some(row) => {
                let probs: Vec<String> = bundle
                    .class_names
                    .iter()
                    .zip(row.iter())
                    .map(|(n, p)| format!("{n}={p:.4}"))
                    .collect();
                println!("{}\t{}\t{}", path.display(), bundle.class_names[argmax(row)], probs.join("\t"));
            }
            None => {
                let why = failures.get(path.as_path()).copied().unwrap_or("could not be decoded");
                eprintln!("{}\terror\t{why}", path.display());
            }
        }
    }
    Ok(if preds.is_empty() { ExitCode::FAILURE } else { ExitCode::SUCCESS })
}

fn report(run_dirs: &[PathBuf]) -> anyhow::Result<()> {
    println!("{:<40} {:>9} {:>9} {:>9} {:>9}", "run", "accuracy", "precision", "recall", "f1");
    for dir in run_dirs {
        let candidates = [dir.join(EVALUATION_DIR).join(REPORT_JSON), dir.join(REPORT_JSON)];
        let path = candidates
            .iter()
            .find(|p| p.exists())
            .with_context(|| format!("no {REPORT_JSON} under {}", dir.display()))?;
        let r = read_report(path)?;
        let (p, rc, f) = r.headline();
        println!(
            "{:<40} {:>9.4} {:>9.4} {:>9.4} {:>9.4}",
            dir.display().to_string(),
            r.accuracy,
            p,
            rc,
            f
        );
        for c in &r.per_class {
            println!(
                "  {:<38} {:>9} {:>9.4} {:>9.4} {:>9.4}  support {}",
                c.class_name, "", c.precision, c.recall, c.f1, c.support
            );
        }
    }
    Ok(())
}
