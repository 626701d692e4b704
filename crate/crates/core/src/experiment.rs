//! Declarative experiment runs: one TOML file drives split, training and
//! evaluation, and an optional grid fans it out over resolution × augmentation.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use candle_core::Device;
use serde::{Deserialize, Serialize};

use crate::augmentation::AugmentationPolicy;
use crate::dataset::{
    load_manifest, manifest_hash, save_manifest, scan_dataset, stratified_split, DatasetManifest, ScanOptions, Split,
    SplitSpec,
};
use crate::evaluation::{
    error_analysis, evaluate_samples, write_report, Averaging, EvaluationReport, PredictOptions, TtaConfig,
};
use crate::model::{build_model, load_checkpoint, BuildOptions, ClassifierHeadConfig, FeatureExtractorConfig, ModelBundle};
use crate::training::{train, TrainOptions, TrainOutcome, TrainingConfig};
use crate::{Error, Result};

/// Dataset root used when neither a flag nor the config names one.
pub const DATASET_ROOT_ENV: &str = "LEAFNET_DATASET_ROOT";

pub const CONFIG_SNAPSHOT: &str = "config.toml";
pub const MANIFEST_FILE: &str = "manifest.tsv";
pub const MANIFEST_HASH_FILE: &str = "manifest.sha256";
pub const CHECKPOINT_DIR: &str = "checkpoint";
pub const EVALUATION_DIR: &str = "evaluation";
pub const ERRORS_DIR: &str = "errors";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    /// Square input side in pixels.
    pub input_resolution: u32,
    pub extractor: FeatureExtractorConfig,
    pub head: ClassifierHeadConfig,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            input_resolution: 256,
            extractor: FeatureExtractorConfig::default(),
            head: ClassifierHeadConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationSection {
    pub split: Split,
    pub averaging: Averaging,
    /// Average predictions over augmented views of each test image.
    pub tta: bool,
    pub tta_views: usize,
    pub gallery: bool,
}

impl Default for EvaluationSection {
    fn default() -> Self {
        Self {
            split: Split::Test,
            averaging: Averaging::Macro,
            tta: false,
            tta_views: 5,
            gallery: true,
        }
    }
}

/// Cartesian product of input sizes and augmentation on/off.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    pub resolutions: Vec<u32>,
    pub augment: Vec<bool>,
}

impl Default for GridSection {
    fn default() -> Self {
        Self {
            resolutions: vec![224, 256],
            augment: vec![true, false],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Fans out to the split, model-init, augmentation, shuffle and dropout streams.
    pub seed: u64,
    pub dataset_root: Option<PathBuf>,
    /// Reuse an existing manifest instead of scanning `dataset_root`.
    pub manifest: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub split: SplitSpec,
    pub augmentation: AugmentationPolicy,
    pub model: ModelSection,
    pub training: TrainingConfig,
    pub evaluation: EvaluationSection,
    pub grid: Option<GridSection>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            dataset_root: None,
            manifest: None,
            output_dir: PathBuf::from("runs/default"),
            split: SplitSpec::default(),
            augmentation: AugmentationPolicy::default(),
            model: ModelSection::default(),
            training: TrainingConfig::default(),
            evaluation: EvaluationSection::default(),
            grid: None,
        }
    }
}

const TRAINING_KEYS: [&str; 7] = [
    "batch_size",
    "learning_rate",
    "plateau_factor",
    "plateau_patience",
    "early_stop_patience",
    "max_epochs",
    "monitor",
];

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text)?;
        let raw: toml::Table = toml::from_str(text)?;
        let defaults = TrainingConfig::default();
        let defaults = toml::Table::try_from(&defaults)?;
        let given = raw.get("training").and_then(|t| t.as_table());
        for key in TRAINING_KEYS {
            if given.is_none_or(|t| !t.contains_key(key)) {
                log::info!("training.{key} not set, using default {}", defaults[key]);
            }
        }
        let seed = cfg.seed;
        Ok(cfg.with_seed(seed))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| Error::config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string_pretty(self)?)
    }

    /// Sets the top-level seed and every stream seed derived from it.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.split.seed = seed;
        self.training.seed = seed;
        self
    }

    /// The flag wins, then the config, then [`DATASET_ROOT_ENV`].
    pub fn resolve_dataset_root(&self, flag: Option<&Path>) -> Option<PathBuf> {
        flag.map(Path::to_path_buf)
            .or_else(|| self.dataset_root.clone())
            .or_else(|| std::env::var_os(DATASET_ROOT_ENV).map(PathBuf::from))
    }

    pub fn validate(&self) -> Result<()> {
        self.split.validate()?;
        self.augmentation.validate()?;
        self.model.extractor.validate()?;
        self.model.head.validate()?;
        self.training.validate()?;
        if self.model.input_resolution < 32 {
            return Err(Error::config(format!(
                "input_resolution {} is below the backbone's 32-pixel minimum",
                self.model.input_resolution
            )));
        }
        if self.evaluation.tta && self.evaluation.tta_views < 2 {
            return Err(Error::config("tta needs tta_views >= 2"));
        }
        if let Some(g) = &self.grid {
            if g.resolutions.is_empty() || g.augment.is_empty() {
                return Err(Error::config("grid needs at least one resolution and one augment setting"));
            }
        }
        Ok(())
    }

    /// One config per grid cell, each writing to its own subdirectory, or
    /// `[self]` when there is no grid.
    pub fn expand(&self) -> Vec<ExperimentConfig> {
        let Some(grid) = &self.grid else {
            return vec![self.clone()];
        };
        let mut out = Vec::new();
        for &res in &grid.resolutions {
            for &aug in &grid.augment {
                let mut cfg = self.clone();
                cfg.grid = None;
                cfg.model.input_resolution = res;
                cfg.augmentation.enabled = aug;
                let tag = if aug { "aug" } else { "noaug" };
                cfg.output_dir = self.output_dir.join(format!("res{res}_{tag}"));
                out.push(cfg);
            }
        }
        out
    }

    pub fn tta(&self) -> Option<TtaConfig> {
        self.evaluation.tta.then(|| TtaConfig {
            views: self.evaluation.tta_views,
            seed: self.seed,
            policy: AugmentationPolicy {
                enabled: true,
                ..self.augmentation.clone()
            },
        })
    }

    pub fn predict_options(&self, strict: bool) -> PredictOptions {
        PredictOptions {
            batch_size: self.training.batch_size,
            tta: self.tta(),
            strict,
            prefetch: self.training.prefetch,
        }
    }
}

/// Command-line values that take precedence over the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub resolution: Option<u32>,
    pub augment: Option<bool>,
    pub freeze_backbone: bool,
    pub tta: bool,
    pub output_dir: Option<PathBuf>,
    pub dataset_root: Option<PathBuf>,
}

impl Overrides {
    /// A resolution or augment flag also pins that axis of the grid.
    pub fn apply(&self, mut cfg: ExperimentConfig) -> ExperimentConfig {
        if let Some(seed) = self.seed {
            cfg = cfg.with_seed(seed);
        }
        if let Some(r) = self.resolution {
            cfg.model.input_resolution = r;
            if let Some(g) = &mut cfg.grid {
                g.resolutions = vec![r];
            }
        }
        if let Some(a) = self.augment {
            cfg.augmentation.enabled = a;
            if let Some(g) = &mut cfg.grid {
                g.augment = vec![a];
            }
        }
        if self.freeze_backbone {
            cfg.model.extractor.trainable = false;
        }
        if self.tta {
            cfg.evaluation.tta = true;
        }
        if let Some(dir) = &self.output_dir {
            cfg.output_dir = dir.clone();
        }
        if let Some(root) = &self.dataset_root {
            cfg.dataset_root = Some(root.clone());
        }
        cfg
    }
}

/// Creates `dir`, refusing a non-empty one unless `overwrite`.
pub fn prepare_run_dir(dir: &Path, overwrite: bool) -> Result<()> {
    if dir.exists() {
        let non_empty = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?.next().is_some();
        if non_empty && !overwrite {
            return Err(Error::config(format!(
                "output directory {} already exists; pass --overwrite to reuse it",
                dir.display()
            )));
        }
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Per-class table with the split columns when the manifest is split.
pub fn class_summary(manifest: &DatasetManifest) -> String {
    let counts = manifest.per_class_counts();
    let splits = manifest.split_counts();
    let split_view = manifest.is_split();
    let mut out = String::new();
    let width = manifest.class_names.iter().map(String::len).max().unwrap_or(5).max(5);
    let _ = write!(out, "{:<width$} {:>7}", "class", "images");
    if split_view {
        let _ = write!(out, " {:>7} {:>7} {:>7}", "train", "val", "test");
    }
    out.push('\n');
    for name in &manifest.class_names {
        let _ = write!(out, "{name:<width$} {:>7}", counts.get(name).copied().unwrap_or(0));
        if split_view {
            for s in Split::ASSIGNED {
                let _ = write!(out, " {:>7}", splits.get(&(name.clone(), s)).copied().unwrap_or(0));
            }
        }
        out.push('\n');
    }
    let _ = writeln!(out, "{:<width$} {:>7}", "total", manifest.samples.len());
    if let Some(r) = manifest.imbalance_ratio() {
        let _ = writeln!(out, "imbalance ratio (largest/smallest): {r:.2}");
    }
    out
}

/// Loads the configured manifest or scans the dataset root, then splits it
/// when it is not split already.
pub fn prepare_manifest(cfg: &ExperimentConfig, root_flag: Option<&Path>, strict: bool) -> Result<DatasetManifest> {
    let root = cfg.resolve_dataset_root(root_flag);
    let manifest = match &cfg.manifest {
        Some(path) => {
            let m = load_manifest(path)?;
            match root {
                Some(r) if root_flag.is_some() || m.root.is_none() => m.with_root(r),
                _ => m,
            }
        }
        None => {
            let root = root.ok_or_else(|| {
                Error::config(format!("no dataset root: pass --dataset-root, set dataset_root, or export {DATASET_ROOT_ENV}"))
            })?;
            let outcome = scan_dataset(
                &root,
                ScanOptions {
                    strict,
                    ..Default::default()
                },
            )?;
            for w in &outcome.warnings {
                log::warn!("{}: {}", w.path.display(), w.message);
            }
            outcome.manifest
        }
    };
    if manifest.is_split() {
        Ok(manifest)
    } else {
        stratified_split(&manifest, &cfg.split)
    }
}

pub fn build_bundle(cfg: &ExperimentConfig, class_names: Vec<String>) -> Result<ModelBundle> {
    let r = cfg.model.input_resolution;
    let mut head = cfg.model.head.clone();
    head.num_classes = class_names.len();
    build_model(&cfg.model.extractor, &head, (r, r), &BuildOptions::new(class_names, cfg.seed))
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RunFlags {
    pub overwrite: bool,
    pub strict: bool,
}

#[derive(Debug)]
pub struct RunSummary {
    pub run_dir: PathBuf,
    pub manifest_hash: String,
    pub training: TrainOutcome,
    pub report: EvaluationReport,
}

/// Evaluates `bundle` on `split`, writing report files and (optionally) the
/// error gallery under `out_dir`.
pub fn evaluate_bundle(
    bundle: &ModelBundle,
    manifest: &DatasetManifest,
    eval: &EvaluationSection,
    opts: &PredictOptions,
    out_dir: &Path,
) -> Result<EvaluationReport> {
    if manifest.class_names != bundle.class_names {
        return Err(Error::Evaluation(format!(
            "class names differ: checkpoint {:?}, manifest {:?}",
            bundle.class_names, manifest.class_names
        )));
    }
    let samples = manifest.labeled(eval.split);
    if samples.is_empty() {
        return Err(Error::Evaluation(format!("the {} split is empty", eval.split)));
    }
    let (report, preds) = evaluate_samples(bundle, &samples, opts, eval.averaging)?;
    write_report(&report, out_dir)?;
    if eval.gallery {
        let train = manifest.labeled(Split::Train);
        let plain = PredictOptions {
            tta: None,
            ..opts.clone()
        };
        error_analysis(bundle, &samples, &preds, &train, &out_dir.join(ERRORS_DIR), &plain)?;
    }
    log::info!("{}: {}", eval.split, report.summary());
    Ok(report)
}

/// Split, train, evaluate: everything lands in `cfg.output_dir`.
pub fn run_experiment(cfg: &ExperimentConfig, root_flag: Option<&Path>, flags: RunFlags) -> Result<RunSummary> {
    cfg.validate()?;
    let dir = &cfg.output_dir;
    prepare_run_dir(dir, flags.overwrite)?;
    let snapshot = dir.join(CONFIG_SNAPSHOT);
    fs::write(&snapshot, cfg.to_toml()?).map_err(|e| Error::io(&snapshot, e))?;

    let manifest = prepare_manifest(cfg, root_flag, flags.strict)?;
    save_manifest(&manifest, &dir.join(MANIFEST_FILE))?;
    let hash = manifest_hash(&manifest)?;
    let hash_path = dir.join(MANIFEST_HASH_FILE);
    fs::write(&hash_path, format!("{hash}\n")).map_err(|e| Error::io(&hash_path, e))?;
    log::info!("manifest {hash}\n{}", class_summary(&manifest));

    let bundle = build_bundle(cfg, manifest.class_names.clone())?;
    let training = train(
        &bundle,
        &manifest,
        &cfg.augmentation,
        &cfg.training,
        &TrainOptions {
            checkpoint_dir: Some(dir.join(CHECKPOINT_DIR)),
            history_dir: Some(dir.clone()),
            diagnostics_dir: Some(dir.join("diagnostics")),
            strict: flags.strict,
        },
    )?;
    let report = evaluate_bundle(
        &bundle,
        &manifest,
        &cfg.evaluation,
        &cfg.predict_options(flags.strict),
        &dir.join(EVALUATION_DIR),
    )?;
    Ok(RunSummary {
        run_dir: dir.clone(),
        manifest_hash: hash,
        training,
        report,
    })
}

/// Loads a checkpoint and evaluates it against `manifest`.
pub fn evaluate_checkpoint(
    checkpoint: &Path,
    manifest: &DatasetManifest,
    eval: &EvaluationSection,
    opts: &PredictOptions,
    out_dir: &Path,
) -> Result<EvaluationReport> {
    let (bundle, _) = load_checkpoint(checkpoint, &Device::Cpu)?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    evaluate_bundle(&bundle, manifest, eval, opts, out_dir)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_is_all_defaults() {
        let cfg = ExperimentConfig::from_toml("").unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
        assert_eq!(cfg.training.learning_rate, 1e-4);
        assert_eq!(cfg.model.input_resolution, 256);
        cfg.validate().unwrap();
    }

    #[test]
    fn toml_round_trip() {
        let mut cfg = ExperimentConfig::default().with_seed(7);
        cfg.dataset_root = Some("/data/apple".into());
        cfg.grid = Some(GridSection::default());
        let back = ExperimentConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn top_level_seed_fans_out() {
        let cfg = ExperimentConfig::from_toml("seed = 42\n[training]\nseed = 3\n").unwrap();
        assert_eq!((cfg.split.seed, cfg.training.seed), (42, 42));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(ExperimentConfig::from_toml("[training]\nlearning_rat = 0.1\n").is_err());
    }

    #[test]
    fn grid_expands_to_four_runs() {
        let cfg = ExperimentConfig {
            output_dir: "runs/ablation".into(),
            grid: Some(GridSection::default()),
            ..Default::default()
        };
        let runs = cfg.expand();
        let dirs: Vec<_> = runs.iter().map(|r| r.output_dir.clone()).collect();
        assert_eq!(
            dirs,
            ["res224_aug", "res224_noaug", "res256_aug", "res256_noaug"]
                .iter()
                .map(|d| PathBuf::from("runs/ablation").join(d))
                .collect::<Vec<_>>()
        );
        assert!(runs[0].augmentation.enabled && !runs[1].augmentation.enabled);
        assert_eq!(runs[3].model.input_resolution, 256);
        assert!(runs.iter().all(|r| r.grid.is_none()));
    }

    #[test]
    fn run_dir_requires_overwrite_when_not_empty() {
        let dir = tempfile::tempdir().unwrap();
        let run = dir.path().join("run");
        prepare_run_dir(&run, false).unwrap();
        prepare_run_dir(&run, false).unwrap();
        fs::write(run.join("x"), "1").unwrap();
        assert!(prepare_run_dir(&run, false).is_err());
        prepare_run_dir(&run, true).unwrap();
    }

    #[test]
    fn dataset_root_precedence() {
        let cfg = ExperimentConfig {
            dataset_root: Some("/from/config".into()),
            ..Default::default()
        };
        assert_eq!(cfg.resolve_dataset_root(Some(Path::new("/from/flag"))), Some("/from/flag".into()));
        assert_eq!(cfg.resolve_dataset_root(None), Some("/from/config".into()));
    }

    #[test]
    fn flags_override_config() {
        let cfg = ExperimentConfig::from_toml(
            "seed = 1\ndataset_root = \"/cfg\"\n[model]\ninput_resolution = 224\n[grid]\nresolutions = [224, 256]\n",
        )
        .unwrap();
        let flags = Overrides {
            seed: Some(5),
            resolution: Some(256),
            augment: Some(false),
            freeze_backbone: true,
            tta: true,
            dataset_root: Some("/flag".into()),
            ..Default::default()
        };
        let out = flags.apply(cfg.clone());
        assert_eq!((out.seed, out.split.seed, out.training.seed), (5, 5, 5));
        assert_eq!(out.model.input_resolution, 256);
        assert_eq!(out.grid.as_ref().unwrap().resolutions, vec![256]);
        assert_eq!(out.grid.as_ref().unwrap().augment, vec![false]);
        assert!(!out.model.extractor.trainable && out.evaluation.tta);
        assert_eq!(out.resolve_dataset_root(None), Some("/flag".into()));
        assert_eq!(Overrides::default().apply(cfg.clone()), cfg);
    }
}
