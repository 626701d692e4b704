//! Checkpoint directory: `weights.safetensors` plus a plain-text `metadata.txt`
//! sidecar of `key=value` lines.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use candle_core::{DType, Device, Tensor};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::bundle::{build_model, BuildOptions, FeatureExtractorConfig, ModelBundle};
use super::head::ClassifierHeadConfig;
use super::preprocess::Normalization;
use crate::{Error, Result};

pub const FORMAT_VERSION: &str = "1";
pub const WEIGHTS_FILE: &str = "weights.safetensors";
pub const METADATA_FILE: &str = "metadata.txt";

/// Training outcome recorded alongside the weights.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMetrics {
    pub epoch: usize,
    pub best_val_accuracy: f64,
    pub best_val_loss: f64,
}

/// Parsed `metadata.txt`.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointMetadata {
    pub format_version: String,
    pub class_names: Vec<String>,
    pub input_resolution: (u32, u32),
    pub config_hash: String,
    pub normalization: Normalization,
    pub head: ClassifierHeadConfig,
    pub backbone_trainable: bool,
    pub metrics: CheckpointMetrics,
    pub config_commit: String,
}

fn err(path: &Path, message: impl Into<String>) -> Error {
    Error::Checkpoint {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

/// Hash of everything that determines the layer graph and its interpretation.
pub fn config_hash(bundle: &ModelBundle) -> String {
    let h = &bundle.head_config;
    let (rh, rw) = bundle.input_resolution();
    let canonical = format!(
        "efficientnet_v2_s;feature_dim={};classes={};resolution={rh}x{rw};normalization={};hidden={};dropout={};batchnorm={}",
        bundle.extractor.feature_dim,
        bundle.class_names.join(","),
        bundle.preprocess.normalization.name(),
        h.hidden_units,
        h.dropout_rate,
        h.use_batchnorm,
    );
    hex::encode(Sha256::digest(canonical.as_bytes()))
}

fn git_commit() -> String {
    std::process::Command::new("git")
        .args(["rev-parse", "--short=12", "HEAD"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .and_then(|o| String::from_utf8(o.stdout).ok())
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .unwrap_or_else(|| "unknown".to_string())
}

fn render_metadata(bundle: &ModelBundle, metrics: &CheckpointMetrics, hash: &str) -> String {
    let (h, w) = bundle.input_resolution();
    let head = &bundle.head_config;
    let mut kv = BTreeMap::new();
    kv.insert("format_version", FORMAT_VERSION.to_string());
    kv.insert("class_names", bundle.class_names.join(","));
    kv.insert("input_resolution", format!("{h}x{w}"));
    kv.insert("config_hash", hash.to_string());
    kv.insert("normalization", bundle.preprocess.normalization.name().to_string());
    kv.insert("hidden_units", head.hidden_units.to_string());
    kv.insert("dropout_rate", head.dropout_rate.to_string());
    kv.insert("use_batchnorm", head.use_batchnorm.to_string());
    kv.insert("backbone_trainable", bundle.extractor.trainable.to_string());
    kv.insert("epoch", metrics.epoch.to_string());
    kv.insert("best_val_accuracy", metrics.best_val_accuracy.to_string());
    kv.insert("best_val_loss", metrics.best_val_loss.to_string());
    kv.insert("config_commit", git_commit());
    kv.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
}

pub fn save_checkpoint(bundle: &ModelBundle, metrics: &CheckpointMetrics, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let hash = config_hash(bundle);
    let tensors: BTreeMap<String, Tensor> = bundle
        .snapshot()?
        .into_iter()
        .map(|(k, v)| Ok((k, v.to_dtype(DType::F32)?)))
        .collect::<Result<_>>()?;
    let mut meta = HashMap::new();
    meta.insert("format_version".to_string(), FORMAT_VERSION.to_string());
    meta.insert("config_hash".to_string(), hash.clone());
    let weights = dir.join(WEIGHTS_FILE);
    safetensors::serialize_to_file(tensors.iter().map(|(k, v)| (k.as_str(), v)), &Some(meta), &weights)
        .map_err(|e| err(&weights, e.to_string()))?;
    let meta_path = dir.join(METADATA_FILE);
    fs::write(&meta_path, render_metadata(bundle, metrics, &hash)).map_err(|e| Error::io(&meta_path, e))?;
    Ok(())
}

pub fn read_metadata(dir: &Path) -> Result<CheckpointMetadata> {
    let path = dir.join(METADATA_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let mut kv = HashMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| Error::ManifestParse {
            path: path.clone(),
            line: i + 1,
            message: "expected key=value".into(),
        })?;
        kv.insert(k.trim().to_string(), v.trim().to_string());
    }
    let get = |k: &str| kv.get(k).cloned().ok_or_else(|| err(&path, format!("missing key {k}")));
    let parse_num = |k: &str| -> Result<f64> {
        get(k)?.parse::<f64>().map_err(|_| err(&path, format!("{k} is not a number")))
    };
    let parse_bool = |k: &str| -> Result<bool> {
        get(k)?.parse::<bool>().map_err(|_| err(&path, format!("{k} is not a boolean")))
    };
    let res = get("input_resolution")?;
    let input_resolution = res
        .split_once('x')
        .and_then(|(h, w)| Some((h.parse().ok()?, w.parse().ok()?)))
        .ok_or_else(|| err(&path, format!("bad input_resolution {res:?}")))?;
    let class_names: Vec<String> = get("class_names")?.split(',').map(str::to_string).collect();
    let normalization = Normalization::parse(&get("normalization")?)
        .ok_or_else(|| err(&path, "unknown normalization"))?;
    Ok(CheckpointMetadata {
        format_version: get("format_version")?,
        head: ClassifierHeadConfig {
            hidden_units: parse_num("hidden_units")? as usize,
            dropout_rate: parse_num("dropout_rate")?,
            num_classes: class_names.len(),
            use_batchnorm: parse_bool("use_batchnorm")?,
        },
        class_names,
        input_resolution,
        config_hash: get("config_hash")?,
        normalization,
        backbone_trainable: parse_bool("backbone_trainable")?,
        metrics: CheckpointMetrics {
            epoch: parse_num("epoch")? as usize,
            best_val_accuracy: parse_num("best_val_accuracy")?,
            best_val_loss: parse_num("best_val_loss")?,
        },
        config_commit: kv.get("config_commit").cloned().unwrap_or_default(),
    })
}

/// Rebuilds the bundle described by `dir/metadata.txt` and loads its weights.
pub fn load_checkpoint(dir: &Path, device: &Device) -> Result<(ModelBundle, CheckpointMetadata)> {
    let meta = read_metadata(dir)?;
    let weights: PathBuf = dir.join(WEIGHTS_FILE);
    if meta.format_version != FORMAT_VERSION {
        return Err(err(
            &weights,
            format!("format version {} is not supported (expected {FORMAT_VERSION})", meta.format_version),
        ));
    }
    let bytes = fs::read(&weights).map_err(|e| Error::io(&weights, e))?;
    let (_, header) = safetensors::SafeTensors::read_metadata(&bytes).map_err(|e| err(&weights, e.to_string()))?;
    let file_meta = header.metadata().clone().unwrap_or_default();
    if file_meta.get("format_version").map(String::as_str) != Some(FORMAT_VERSION)
        || file_meta.get("config_hash") != Some(&meta.config_hash)
    {
        return Err(err(
            &weights,
            format!(
                "weights do not belong to this metadata (weights: version {:?} hash {:?}; metadata: version {} hash {})",
                file_meta.get("format_version"),
                file_meta.get("config_hash"),
                meta.format_version,
                meta.config_hash
            ),
        ));
    }
    let tensors = candle_core::safetensors::load_buffer(&bytes, device)?;
    let out_units = tensors
        .get("head.dense2.weight")
        .ok_or_else(|| err(&weights, "missing head.dense2.weight"))?
        .dims()[0];
    if out_units != meta.class_names.len() {
        return Err(err(
            &weights,
            format!(
                "{} class names in metadata but the output layer has {out_units} units",
                meta.class_names.len()
            ),
        ));
    }
    let extractor = FeatureExtractorConfig {
        pretrained: false,
        trainable: meta.backbone_trainable,
        ..FeatureExtractorConfig::default()
    };
    let mut opts = BuildOptions::new(meta.class_names.clone(), 0);
    opts.normalization = meta.normalization;
    opts.device = device.clone();
    let bundle = build_model(&extractor, &meta.head, meta.input_resolution, &opts)?;
    if config_hash(&bundle) != meta.config_hash {
        return Err(err(&weights, "config hash does not match the rebuilt model"));
    }
    bundle.restore(&tensors)?;
    Ok((bundle, meta))
}
