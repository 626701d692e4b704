use std::collections::HashMap;
use std::path::{Path, PathBuf};

use candle_core::{DType, Device, Tensor};
use candle_nn::VarMap;
use serde::{Deserialize, Serialize};

use super::backbone::{EfficientNetV2S, FEATURE_DIM};
use super::head::{ClassifierHead, ClassifierHeadConfig, Mode};
use super::layers::Pass;
use super::init::SeededVarMap;
use super::preprocess::{Normalization, PreprocessSpec};
use super::structure::{self, StageRow, StructureReport};
use crate::{Error, Result};

/// Environment variable consulted when no weights path is configured.
pub const WEIGHTS_ENV: &str = "LEAFNET_BACKBONE_WEIGHTS";

const DOWNLOAD_HINT: &str = "export ImageNet weights with \
`python3 scripts/export_efficientnet_v2_s.py --out efficientnet_v2_s.safetensors` \
(downloads torchvision's EfficientNet_V2_S_Weights.IMAGENET1K_V1) and point \
`model.extractor.weights` or LEAFNET_BACKBONE_WEIGHTS at the file";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureExtractorConfig {
    /// Load ImageNet weights; when false the backbone is seeded-random (tests only).
    pub pretrained: bool,
    /// safetensors file with torchvision `efficientnet_v2_s` names.
    pub weights: Option<PathBuf>,
    /// Fine-tune the backbone; `false` freezes it and keeps its batch norm in inference mode.
    pub trainable: bool,
    /// Refuse to build unless the live network matches `expected_stage_table`.
    pub verify_structure: bool,
    pub expected_stage_table: Vec<StageRow>,
    pub feature_dim: usize,
}

impl Default for FeatureExtractorConfig {
    fn default() -> Self {
        Self {
            pretrained: true,
            weights: None,
            trainable: true,
            verify_structure: true,
            expected_stage_table: structure::canonical_table(),
            feature_dim: FEATURE_DIM,
        }
    }
}

impl FeatureExtractorConfig {
    pub fn untrained() -> Self {
        Self {
            pretrained: false,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.feature_dim != FEATURE_DIM {
            return Err(Error::config(format!(
                "EfficientNetV2-S emits {FEATURE_DIM} features, config asks for {}",
                self.feature_dim
            )));
        }
        Ok(())
    }

    /// Configured path, else the environment override.
    pub fn resolve_weights(&self) -> Option<PathBuf> {
        self.weights
            .clone()
            .or_else(|| std::env::var_os(WEIGHTS_ENV).map(PathBuf::from))
    }
}

/// Backbone + classifier head + preprocessing contract.
pub struct ModelBundle {
    pub(crate) backbone: EfficientNetV2S,
    pub(crate) head: ClassifierHead,
    pub(crate) backbone_vars: VarMap,
    pub(crate) head_vars: VarMap,
    pub class_names: Vec<String>,
    pub extractor: FeatureExtractorConfig,
    pub head_config: ClassifierHeadConfig,
    pub preprocess: PreprocessSpec,
    pub device: Device,
    pub dtype: DType,
}

/// Builder inputs that are not part of the two layer configs.
#[derive(Debug, Clone)]
pub struct BuildOptions {
    pub class_names: Vec<String>,
    /// Seed for the head (and, when not pretrained, the backbone).
    pub init_seed: u64,
    pub normalization: Normalization,
    pub device: Device,
    pub dtype: DType,
}

impl BuildOptions {
    pub fn new(class_names: Vec<String>, init_seed: u64) -> Self {
        Self {
            class_names,
            init_seed,
            normalization: Normalization::Imagenet,
            device: Device::Cpu,
            dtype: DType::F32,
        }
    }
}

pub fn build_model(
    extractor: &FeatureExtractorConfig,
    head_cfg: &ClassifierHeadConfig,
    input_resolution: (u32, u32),
    opts: &BuildOptions,
) -> Result<ModelBundle> {
    extractor.validate()?;
    head_cfg.validate()?;
    if opts.class_names.len() != head_cfg.num_classes {
        return Err(Error::config(format!(
            "{} class names for a {}-way head",
            opts.class_names.len(),
            head_cfg.num_classes
        )));
    }
    let preprocess = PreprocessSpec::new(input_resolution, opts.normalization)?;
    let seed = crate::seed::derive(opts.init_seed, crate::seed::MODEL_INIT, &[]);

    let backbone_vars = VarMap::new();
    let vb = SeededVarMap::new(backbone_vars.clone(), seed).into_var_builder(opts.dtype, &opts.device);
    let backbone = EfficientNetV2S::new(vb)?;

    let head_vars = VarMap::new();
    let vb = SeededVarMap::new(head_vars.clone(), seed ^ 0x5eed).into_var_builder(opts.dtype, &opts.device);
    let head = ClassifierHead::new(vb.pp("head"), FEATURE_DIM, head_cfg)?;

    let bundle = ModelBundle {
        backbone,
        head,
        backbone_vars,
        head_vars,
        class_names: opts.class_names.clone(),
        extractor: extractor.clone(),
        head_config: head_cfg.clone(),
        preprocess,
        device: opts.device.clone(),
        dtype: opts.dtype,
    };

    if extractor.pretrained {
        let path = extractor.resolve_weights().ok_or_else(|| {
            Error::Model(format!("pretrained backbone requested but no weights configured; {DOWNLOAD_HINT}"))
        })?;
        if !path.exists() {
            return Err(Error::Model(format!(
                "pretrained weights {} not found; {DOWNLOAD_HINT}",
                path.display()
            )));
        }
        bundle.load_backbone_weights(&path)?;
    }
    if extractor.verify_structure {
        let report = bundle.verify_structure(&extractor.expected_stage_table);
        if !report.all_passed() {
            return Err(Error::Model(format!(
                "backbone does not match the expected stage table:\n{}",
                report.render()
            )));
        }
    }
    Ok(bundle)
}

pub(crate) fn assign_vars(vars: &VarMap, tensors: &HashMap<String, Tensor>, source: &Path) -> Result<()> {
    let data = vars.data().lock().unwrap();
    let mut missing: Vec<&str> = data
        .keys()
        .filter(|k| !tensors.contains_key(k.as_str()))
        .map(String::as_str)
        .collect();
    if !missing.is_empty() {
        missing.sort_unstable();
        let shown = missing.iter().take(5).copied().collect::<Vec<_>>().join(", ");
        return Err(Error::Checkpoint {
            path: source.to_path_buf(),
            message: format!("{} tensors missing (e.g. {shown})", missing.len()),
        });
    }
    for (name, var) in data.iter() {
        let t = &tensors[name];
        if t.dims() != var.dims() {
            return Err(Error::Checkpoint {
                path: source.to_path_buf(),
                message: format!("{name}: shape {:?}, model expects {:?}", t.dims(), var.dims()),
            });
        }
        var.set(&t.to_dtype(var.dtype())?.to_device(var.device())?)?;
    }
    Ok(())
}

impl ModelBundle {
    pub fn input_resolution(&self) -> (u32, u32) {
        self.preprocess.target_size
    }

    pub fn num_classes(&self) -> usize {
        self.head.num_classes()
    }

    pub fn backbone(&self) -> &EfficientNetV2S {
        &self.backbone
    }

    /// Loads ImageNet weights from a torchvision-named safetensors file.
    pub fn load_backbone_weights(&self, path: &Path) -> Result<()> {
        let tensors = candle_core::safetensors::load(path, &self.device).map_err(|e| Error::Checkpoint {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        assign_vars(&self.backbone_vars, &tensors, path)?;
        log::info!("loaded backbone weights from {}", path.display());
        Ok(())
    }

    pub fn verify_structure(&self, expected: &[StageRow]) -> StructureReport {
        structure::verify(&self.backbone, expected)
    }

    /// Variables updated by the optimiser: the head, plus the backbone unless frozen.
    pub fn trainable_vars(&self) -> Vec<candle_core::Var> {
        let mut vars = Vec::new();
        let mut push_from = |map: &VarMap| {
            let data = map.data().lock().unwrap();
            let mut names: Vec<&String> = data.keys().collect();
            names.sort();
            for name in names {
                if !name.ends_with("running_mean") && !name.ends_with("running_var") {
                    vars.push(data[name].clone());
                }
            }
        };
        push_from(&self.head_vars);
        if self.extractor.trainable {
            push_from(&self.backbone_vars);
        }
        vars
    }

    pub(crate) fn check_batch(&self, batch: &Tensor) -> Result<()> {
        let (h, w) = self.input_resolution();
        let dims = batch.dims();
        if dims.len() != 4 || dims[1] != 3 || dims[2] != h as usize || dims[3] != w as usize {
            return Err(Error::Shape {
                expected: format!("(B, 3, {h}, {w})"),
                actual: format!("{dims:?}"),
            });
        }
        Ok(())
    }

    /// Pooled backbone features `(B, 1280)`.
    pub fn features(&self, batch: &Tensor, mode: Mode) -> Result<Tensor> {
        self.check_batch(batch)?;
        // A frozen backbone also keeps its batch norm on running statistics.
        let pass = Pass::from_train(mode.is_train() && self.extractor.trainable);
        let batch = batch.to_dtype(self.dtype)?;
        Ok(self.backbone.features(&batch, pass)?)
    }

    /// Class logits `(B, num_classes)`.
    pub fn logits(&self, batch: &Tensor, mode: Mode) -> Result<Tensor> {
        let f = self.features(batch, mode)?;
        self.head.forward(&f, mode)
    }

    /// Class probabilities in inference mode; each row sums to one.
    pub fn forward(&self, batch: &Tensor) -> Result<Tensor> {
        let logits = self.logits(batch, Mode::Inference)?;
        Ok(candle_nn::ops::softmax_last_dim(&logits)?)
    }

    /// Deep copy of every variable (weights and batch-norm statistics).
    pub fn snapshot(&self) -> Result<HashMap<String, Tensor>> {
        let mut out = HashMap::new();
        for map in [&self.backbone_vars, &self.head_vars] {
            for (name, var) in map.data().lock().unwrap().iter() {
                out.insert(name.clone(), var.as_tensor().copy()?);
            }
        }
        Ok(out)
    }

    pub fn restore(&self, snapshot: &HashMap<String, Tensor>) -> Result<()> {
        let source = Path::new("<snapshot>");
        assign_vars(&self.backbone_vars, snapshot, source)?;
        assign_vars(&self.head_vars, snapshot, source)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names() -> Vec<String> {
        ["apple_scab", "black_rot", "cedar_apple_rust", "healthy"]
            .iter()
            .map(|s| s.to_string())
            .collect()
    }

    #[test]
    fn pretrained_without_weights_explains_how_to_get_them() {
        let cfg = FeatureExtractorConfig {
            weights: Some(PathBuf::from("/nonexistent/effnet.safetensors")),
            ..Default::default()
        };
        let err = build_model(&cfg, &ClassifierHeadConfig::default(), (64, 64), &BuildOptions::new(names(), 0))
            .err()
            .unwrap()
            .to_string();
        assert!(err.contains("not found"), "{err}");
        assert!(err.contains("export_efficientnet_v2_s.py"), "{err}");
    }

    #[test]
    fn class_names_must_match_head() {
        let head = ClassifierHeadConfig {
            num_classes: 3,
            ..Default::default()
        };
        assert!(build_model(&FeatureExtractorConfig::untrained(), &head, (64, 64), &BuildOptions::new(names(), 0)).is_err());
    }
}
