//! Build the EfficientNetV2-S extractor, check it against the expected stage
//! table and run one batch through the full classifier.
//!
//!     LEAFNET_BACKBONE_WEIGHTS=efficientnet_v2_s.safetensors cargo run --example inspect_backbone
//!
//! Without weights the backbone is seeded-random, which is enough for shapes.

use candle_core::{Device, Tensor};
use leafnet::model::{build_model, BuildOptions, ClassifierHeadConfig, FeatureExtractorConfig, Mode, WEIGHTS_ENV};

fn main() -> anyhow::Result<()> {
    let extractor = if std::env::var_os(WEIGHTS_ENV).is_some() {
        FeatureExtractorConfig::default()
    } else {
        println!("{WEIGHTS_ENV} not set; using a random backbone");
        FeatureExtractorConfig::untrained()
    };
    let names = leafnet::dataset::APPLE_CLASSES.iter().map(|s| s.to_string()).collect();
    let bundle = build_model(&extractor, &ClassifierHeadConfig::default(), (224, 224), &BuildOptions::new(names, 0))?;

    let report = bundle.verify_structure(&extractor.expected_stage_table);
    println!("{}", report.render());
    let params: usize = bundle.trainable_vars().iter().map(|v| v.elem_count()).sum();
    println!("trainable parameters: {params}");

    let batch = Tensor::randn(0f32, 1.0, (2, 3, 224, 224), &Device::Cpu)?;
    let features = bundle.features(&batch, Mode::Inference)?;
    let probs = bundle.forward(&batch)?;
    println!("features {:?}, probabilities {:?}", features.dims(), probs.dims());
    println!("{}", probs);
    Ok(())
}
