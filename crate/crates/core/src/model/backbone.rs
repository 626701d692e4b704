//! EfficientNetV2-S feature extractor.
//!
//! Variable names follow torchvision's `efficientnet_v2_s` state dict
//! (`features.<stage>.<block>.block.<layer>...`) so ImageNet weights exported
//! from torchvision load without renaming. Only the layer graph lives here; the
//! pretrained parameters always come from a weights file.

use candle_core::{ModuleT, Tensor};
use candle_nn::VarBuilder;

use super::layers::{ConvBnAct, DepthwiseBnAct, Pass, SqueezeExcitation};

/// Width of the pooled feature vector.
pub const FEATURE_DIM: usize = 1280;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockType {
    Fused,
    Inverted,
}

/// One stage of stacked blocks, torchvision layout.
#[derive(Debug, Clone, Copy)]
pub(crate) struct StageConfig {
    pub block: BlockType,
    pub expand_ratio: usize,
    pub kernel: usize,
    pub stride: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub num_layers: usize,
}

const fn stage(
    block: BlockType,
    expand_ratio: usize,
    stride: usize,
    in_channels: usize,
    out_channels: usize,
    num_layers: usize,
) -> StageConfig {
    StageConfig {
        block,
        expand_ratio,
        kernel: 3,
        stride,
        in_channels,
        out_channels,
        num_layers,
    }
}

pub(crate) const STEM_CHANNELS: usize = 24;

pub(crate) const STAGES: [StageConfig; 6] = [
    stage(BlockType::Fused, 1, 1, 24, 24, 2),
    stage(BlockType::Fused, 4, 2, 24, 48, 4),
    stage(BlockType::Fused, 4, 2, 48, 64, 4),
    stage(BlockType::Inverted, 4, 2, 64, 128, 6),
    stage(BlockType::Inverted, 6, 1, 128, 160, 9),
    stage(BlockType::Inverted, 6, 2, 160, 256, 15),
];

/// Fused-MBConv: the expansion and depthwise convolutions are replaced by one
/// regular 3x3 convolution; a 1x1 projection follows when the block expands.
#[derive(Debug, Clone)]
pub struct FusedMbConv {
    pub(crate) fused: ConvBnAct,
    pub(crate) project: Option<ConvBnAct>,
    residual: bool,
}

impl FusedMbConv {
    fn new(vb: VarBuilder, cfg: &StageConfig, in_ch: usize, stride: usize) -> candle_core::Result<Self> {
        let out_ch = cfg.out_channels;
        let vb = vb.pp("block");
        let (fused, project) = if cfg.expand_ratio == 1 {
            (ConvBnAct::new(vb.pp("0"), in_ch, out_ch, cfg.kernel, stride, true)?, None)
        } else {
            let hidden = in_ch * cfg.expand_ratio;
            (
                ConvBnAct::new(vb.pp("0"), in_ch, hidden, cfg.kernel, stride, true)?,
                Some(ConvBnAct::new(vb.pp("1"), hidden, out_ch, 1, 1, false)?),
            )
        };
        Ok(Self {
            fused,
            project,
            residual: stride == 1 && in_ch == out_ch,
        })
    }

    fn forward(&self, x: &Tensor, pass: Pass) -> candle_core::Result<Tensor> {
        let mut y = self.fused.forward(x, pass)?;
        if let Some(p) = &self.project {
            y = p.forward(&y, pass)?;
        }
        if self.residual {
            y = (y + x)?;
        }
        Ok(y)
    }
}

/// MBConv: pointwise expansion, depthwise 3x3, squeeze-excitation, pointwise projection.
#[derive(Debug, Clone)]
pub struct MbConv {
    pub(crate) expand: ConvBnAct,
    pub(crate) depthwise: DepthwiseBnAct,
    pub(crate) se: SqueezeExcitation,
    pub(crate) project: ConvBnAct,
    residual: bool,
}

impl MbConv {
    fn new(vb: VarBuilder, cfg: &StageConfig, in_ch: usize, stride: usize) -> candle_core::Result<Self> {
        let hidden = in_ch * cfg.expand_ratio;
        let vb = vb.pp("block");
        let expand = ConvBnAct::new(vb.pp("0"), in_ch, hidden, 1, 1, true)?;
        let depthwise = DepthwiseBnAct::new(vb.pp("1"), hidden, cfg.kernel, stride)?;
        let se = SqueezeExcitation::new(vb.pp("2"), hidden, (in_ch / 4).max(1))?;
        let project = ConvBnAct::new(vb.pp("3"), hidden, cfg.out_channels, 1, 1, false)?;
        Ok(Self {
            expand,
            depthwise,
            se,
            project,
            residual: stride == 1 && in_ch == cfg.out_channels,
        })
    }

    fn forward(&self, x: &Tensor, pass: Pass) -> candle_core::Result<Tensor> {
        let y = self.expand.forward(x, pass)?;
        let y = self.depthwise.forward(&y, pass)?;
        let y = self.se.forward(&y, pass)?;
        let y = self.project.forward(&y, pass)?;
        if self.residual {
            y + x
        } else {
            Ok(y)
        }
    }
}

#[derive(Debug, Clone)]
pub enum Block {
    Fused(FusedMbConv),
    Inverted(MbConv),
}

impl Block {
    fn forward(&self, x: &Tensor, pass: Pass) -> candle_core::Result<Tensor> {
        match self {
            Block::Fused(b) => b.forward(x, pass),
            Block::Inverted(b) => b.forward(x, pass),
        }
    }
}

#[derive(Debug, Clone)]
pub struct EfficientNetV2S {
    pub(crate) stem: ConvBnAct,
    pub(crate) stages: Vec<Vec<Block>>,
    pub(crate) final_conv: ConvBnAct,
}

impl EfficientNetV2S {
    /// `vb` should point at the root of the torchvision naming scheme
    /// (the `features` prefix is added here).
    pub fn new(vb: VarBuilder) -> candle_core::Result<Self> {
        let vb = vb.pp("features");
        let stem = ConvBnAct::new(vb.pp("0"), 3, STEM_CHANNELS, 3, 2, true)?;
        let mut stages = Vec::with_capacity(STAGES.len());
        for (si, cfg) in STAGES.iter().enumerate() {
            let svb = vb.pp((si + 1).to_string());
            let mut blocks = Vec::with_capacity(cfg.num_layers);
            for bi in 0..cfg.num_layers {
                let (in_ch, stride) = if bi == 0 {
                    (cfg.in_channels, cfg.stride)
                } else {
                    (cfg.out_channels, 1)
                };
                let bvb = svb.pp(bi.to_string());
                blocks.push(match cfg.block {
                    BlockType::Fused => Block::Fused(FusedMbConv::new(bvb, cfg, in_ch, stride)?),
                    BlockType::Inverted => Block::Inverted(MbConv::new(bvb, cfg, in_ch, stride)?),
                });
            }
            stages.push(blocks);
        }
        let last = STAGES[STAGES.len() - 1].out_channels;
        let final_conv = ConvBnAct::new(
            vb.pp((STAGES.len() + 1).to_string()),
            last,
            FEATURE_DIM,
            1,
            1,
            true,
        )?;
        Ok(Self {
            stem,
            stages,
            final_conv,
        })
    }

    /// Feature map before pooling, `(B, 1280, H/32, W/32)`.
    pub fn feature_map(&self, x: &Tensor, pass: Pass) -> candle_core::Result<Tensor> {
        let mut x = self.stem.forward(x, pass)?;
        for stage in &self.stages {
            for block in stage {
                x = block.forward(&x, pass)?;
            }
        }
        self.final_conv.forward(&x, pass)
    }

    /// Globally average-pooled features, `(B, 1280)`.
    pub fn features(&self, x: &Tensor, pass: Pass) -> candle_core::Result<Tensor> {
        self.feature_map(x, pass)?.mean(3)?.mean(2)
    }
}

impl ModuleT for EfficientNetV2S {
    fn forward_t(&self, x: &Tensor, train: bool) -> candle_core::Result<Tensor> {
        self.features(x, Pass::from_train(train))
    }
}
