//! Structural verification of the instantiated feature extractor against the
//! published EfficientNetV2-S stage table.
//!
//! The observed rows are read back from the live layers (weight shapes and
//! convolution configs), not from the builder's constants.

use std::fmt;

use serde::{Deserialize, Serialize};

use super::backbone::{Block, EfficientNetV2S};
use super::layers::ConvBnAct;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "expand", rename_all = "snake_case")]
pub enum Operator {
    Conv,
    FusedMbConv(usize),
    MbConv(usize),
}

impl fmt::Display for Operator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Operator::Conv => write!(f, "Conv"),
            Operator::FusedMbConv(e) => write!(f, "Fused-MBConv{e}"),
            Operator::MbConv(e) => write!(f, "MBConv{e}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageRow {
    pub operator: Operator,
    pub kernel: usize,
    /// `None` where the table has no stride entry (the final 1x1 conv).
    pub stride: Option<usize>,
    pub channels: usize,
    pub layers: usize,
}

const fn row(operator: Operator, kernel: usize, stride: Option<usize>, channels: usize, layers: usize) -> StageRow {
    StageRow {
        operator,
        kernel,
        stride,
        channels,
        layers,
    }
}

/// Operator, filter size, stride, channels and layer count of each stage.
pub const EFFICIENTNET_V2_S_TABLE: [StageRow; 8] = [
    row(Operator::Conv, 3, Some(2), 24, 1),
    row(Operator::FusedMbConv(1), 3, Some(1), 24, 2),
    row(Operator::FusedMbConv(4), 3, Some(2), 48, 4),
    row(Operator::FusedMbConv(4), 3, Some(2), 64, 4),
    row(Operator::MbConv(4), 3, Some(2), 128, 6),
    row(Operator::MbConv(6), 3, Some(1), 160, 9),
    row(Operator::MbConv(6), 3, Some(2), 256, 15),
    row(Operator::Conv, 1, None, 1280, 1),
];

pub fn canonical_table() -> Vec<StageRow> {
    EFFICIENTNET_V2_S_TABLE.to_vec()
}

/// What one stage of the live network looks like.
#[derive(Debug, Clone, Serialize)]
pub struct ObservedStage {
    pub row: StageRow,
    pub in_channels: usize,
    /// Per-block composition, e.g. `expand 1x1 64->256 | depthwise 3x3 x256 | se 16 | project 1x1 256->128`.
    pub composition: Vec<String>,
    /// Violations of the operator's internal layout.
    pub issues: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RowVerdict {
    pub index: usize,
    pub expected: StageRow,
    pub observed: Option<StageRow>,
    pub composition: Vec<String>,
    pub issues: Vec<String>,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct StructureReport {
    pub rows: Vec<RowVerdict>,
    pub total_layers: usize,
    pub feature_dim: usize,
}

impl StructureReport {
    pub fn all_passed(&self) -> bool {
        self.rows.iter().all(|r| r.passed)
    }

    pub fn failing_rows(&self) -> Vec<usize> {
        self.rows.iter().filter(|r| !r.passed).map(|r| r.index).collect()
    }

    /// Human-readable table, one line per stage.
    pub fn render(&self) -> String {
        let mut out = String::from("stage  operator        k  stride  channels  layers  result\n");
        for r in &self.rows {
            let obs = r.observed.unwrap_or(r.expected);
            out.push_str(&format!(
                "{:<6} {:<15} {:<2} {:<7} {:<9} {:<7} {}\n",
                r.index,
                obs.operator.to_string(),
                obs.kernel,
                obs.stride.map_or("-".to_string(), |s| s.to_string()),
                obs.channels,
                obs.layers,
                if r.passed { "ok".to_string() } else { format!("FAIL {:?}", r.issues) }
            ));
        }
        out.push_str(&format!(
            "total layers {}, feature width {}\n",
            self.total_layers, self.feature_dim
        ));
        out
    }
}

fn conv_summary(tag: &str, c: &ConvBnAct) -> String {
    format!(
        "{tag} {k}x{k} {i}->{o}",
        k = c.kernel(),
        i = c.in_channels(),
        o = c.out_channels()
    )
}

fn observe_dense_conv(c: &ConvBnAct) -> ObservedStage {
    let issues = Vec::new();
    ObservedStage {
        row: StageRow {
            operator: Operator::Conv,
            kernel: c.kernel(),
            stride: Some(c.stride()),
            channels: c.out_channels(),
            layers: 1,
        },
        in_channels: c.in_channels(),
        composition: vec![conv_summary("conv", c)],
        issues,
    }
}

fn observe_stage(blocks: &[Block]) -> ObservedStage {
    let mut composition = Vec::with_capacity(blocks.len());
    let mut issues = Vec::new();
    let mut ops = Vec::with_capacity(blocks.len());
    let mut first: Option<(usize, usize, usize)> = None; // kernel, stride, in_channels
    let mut out_channels = 0;
    for (i, block) in blocks.iter().enumerate() {
        let (op, kernel, stride, in_ch, out_ch) = match block {
            Block::Fused(b) => {
                let f = &b.fused;
                if f.kernel() != 3 {
                    issues.push(format!("block {i}: fused conv is {}x{}, expected 3x3", f.kernel(), f.kernel()));
                }
                let mut desc = vec![conv_summary("fused", f)];
                let out = match &b.project {
                    Some(p) => {
                        if p.kernel() != 1 || p.has_activation() {
                            issues.push(format!("block {i}: projection must be a linear 1x1 conv"));
                        }
                        desc.push(conv_summary("project", p));
                        p.out_channels()
                    }
                    None => f.out_channels(),
                };
                composition.push(desc.join(" | "));
                let expand = f.out_channels() / f.in_channels().max(1);
                let expand = if b.project.is_none() { 1 } else { expand };
                (Operator::FusedMbConv(expand), f.kernel(), f.stride(), f.in_channels(), out)
            }
            Block::Inverted(b) => {
                let e = &b.expand;
                let d = &b.depthwise;
                let p = &b.project;
                if e.kernel() != 1 {
                    issues.push(format!("block {i}: expansion must be a pointwise conv"));
                }
                if d.channels() != e.out_channels() {
                    issues.push(format!(
                        "block {i}: depthwise conv covers {} channels, expansion emits {}",
                        d.channels(),
                        e.out_channels()
                    ));
                }
                if p.kernel() != 1 || p.has_activation() || p.in_channels() != d.channels() {
                    issues.push(format!("block {i}: projection must be a linear 1x1 conv"));
                }
                if b.se.channels() != d.channels() {
                    issues.push(format!("block {i}: squeeze-excitation width {} differs from {}", b.se.channels(), d.channels()));
                }
                composition.push(format!(
                    "{} | depthwise {k}x{k} x{c} | se {s} | {}",
                    conv_summary("expand", e),
                    conv_summary("project", p),
                    k = d.kernel(),
                    c = d.channels(),
                    s = b.se.squeeze_channels(),
                ));
                let expand = e.out_channels() / e.in_channels().max(1);
                (Operator::MbConv(expand), d.kernel(), d.stride(), e.in_channels(), p.out_channels())
            }
        };
        ops.push(op);
        match first {
            None => first = Some((kernel, stride, in_ch)),
            Some(_) => {
                if stride != 1 {
                    issues.push(format!("block {i}: only the first block may downsample"));
                }
                if in_ch != out_channels {
                    issues.push(format!("block {i}: input {in_ch} does not chain from {out_channels}"));
                }
            }
        }
        out_channels = out_ch;
    }
    let op = ops.first().copied().unwrap_or(Operator::Conv);
    if ops.iter().any(|o| *o != op) {
        issues.push(format!("mixed operators within stage: {ops:?}"));
    }
    let (kernel, stride, in_channels) = first.unwrap_or((0, 0, 0));
    ObservedStage {
        row: StageRow {
            operator: op,
            kernel,
            stride: Some(stride),
            channels: out_channels,
            layers: blocks.len(),
        },
        in_channels,
        composition,
        issues,
    }
}

/// Reads the stage sequence back from the live network.
pub fn observe(backbone: &EfficientNetV2S) -> Vec<ObservedStage> {
    let mut stages = vec![observe_dense_conv(&backbone.stem)];
    stages.extend(backbone.stages.iter().map(|s| observe_stage(s)));
    stages.push(observe_dense_conv(&backbone.final_conv));
    stages
}

fn stride_matches(expected: Option<usize>, observed: Option<usize>) -> bool {
    match expected {
        Some(s) => observed == Some(s),
        None => observed.is_none_or(|s| s == 1),
    }
}

/// Compares the live network against `expected`, row by row.
pub fn verify(backbone: &EfficientNetV2S, expected: &[StageRow]) -> StructureReport {
    let observed = observe(backbone);
    let n = expected.len().max(observed.len());
    let mut rows = Vec::with_capacity(n);
    let mut prev_out = 3;
    for i in 0..n {
        let exp = expected.get(i).copied();
        let obs = observed.get(i);
        let (passed, issues, composition, observed_row) = match (exp, obs) {
            (Some(e), Some(o)) => {
                let mut issues = o.issues.clone();
                if e.operator != o.row.operator {
                    issues.push(format!("operator {} != {}", o.row.operator, e.operator));
                }
                if e.kernel != o.row.kernel {
                    issues.push(format!("kernel {} != {}", o.row.kernel, e.kernel));
                }
                if !stride_matches(e.stride, o.row.stride) {
                    issues.push(format!("stride {:?} != {:?}", o.row.stride, e.stride));
                }
                if e.channels != o.row.channels {
                    issues.push(format!("channels {} != {}", o.row.channels, e.channels));
                }
                if e.layers != o.row.layers {
                    issues.push(format!("layers {} != {}", o.row.layers, e.layers));
                }
                if o.in_channels != prev_out {
                    issues.push(format!("input channels {} do not chain from {}", o.in_channels, prev_out));
                }
                (issues.is_empty(), issues, o.composition.clone(), Some(o.row))
            }
            (Some(_), None) => (false, vec!["stage missing from network".into()], vec![], None),
            (None, Some(o)) => (false, vec!["unexpected extra stage".into()], o.composition.clone(), Some(o.row)),
            (None, None) => unreachable!(),
        };
        if let Some(o) = obs {
            prev_out = o.row.channels;
        }
        let mut observed_row = observed_row;
        if let (Some(r), Some(e)) = (observed_row.as_mut(), exp) {
            if e.stride.is_none() && r.stride == Some(1) {
                r.stride = None;
            }
        }
        rows.push(RowVerdict {
            index: i,
            expected: exp.unwrap_or_else(|| observed_row.expect("observed row exists")),
            observed: observed_row,
            composition,
            issues,
            passed,
        });
    }
    StructureReport {
        total_layers: observed.iter().map(|o| o.row.layers).sum(),
        feature_dim: observed.last().map_or(0, |o| o.row.channels),
        rows,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_layer_count() {
        let total: usize = EFFICIENTNET_V2_S_TABLE.iter().map(|r| r.layers).sum();
        assert_eq!(total, 1 + 2 + 4 + 4 + 6 + 9 + 15 + 1);
        assert_eq!(total, 42);
        assert_eq!(EFFICIENTNET_V2_S_TABLE[7].channels, 1280);
    }

    #[test]
    fn operator_names() {
        assert_eq!(Operator::FusedMbConv(4).to_string(), "Fused-MBConv4");
        assert_eq!(Operator::MbConv(6).to_string(), "MBConv6");
        assert_eq!(Operator::Conv.to_string(), "Conv");
    }
}
