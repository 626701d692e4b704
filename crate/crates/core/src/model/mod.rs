//! Feature extractor, classifier head, preprocessing and checkpoints.

pub mod backbone;
pub mod bundle;
pub mod checkpoint;
mod depthwise;
pub mod head;
pub mod init;
pub mod layers;
pub mod preprocess;
pub mod structure;

pub use backbone::{EfficientNetV2S, FEATURE_DIM};
pub use bundle::{build_model, BuildOptions, FeatureExtractorConfig, ModelBundle, WEIGHTS_ENV};
pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointMetadata, CheckpointMetrics};
pub use head::{ClassifierHead, ClassifierHeadConfig, Mode};
pub use layers::Pass;
pub use preprocess::{Normalization, PreprocessSpec};
pub use structure::{StageRow, StructureReport, EFFICIENTNET_V2_S_TABLE};
