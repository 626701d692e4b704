//! Convolution, normalisation and dense layers shared by the backbone and head.
//!
//! Every layer takes a [`Pass`]. In [`Pass::Eval`] weights are detached, so a
//! forward pass builds no autograd graph and intermediates are freed as soon as
//! they go out of scope.

use candle_core::{Tensor, Var, D};
use candle_nn::{init, Init, VarBuilder};

use super::depthwise::{depthwise_conv2d, Geometry};

/// Batch-norm epsilon used by the EfficientNetV2 family.
pub const BN_EPS: f64 = 1e-3;
/// Weight of the current batch in the running-statistics update.
pub const BN_MOMENTUM: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pass {
    /// Running statistics, no gradient tracking.
    Eval,
    /// Batch statistics (running statistics are updated), gradients tracked.
    Train,
}

impl Pass {
    pub fn from_train(train: bool) -> Self {
        if train {
            Pass::Train
        } else {
            Pass::Eval
        }
    }

    pub fn is_train(self) -> bool {
        self == Pass::Train
    }

    fn param(self, t: &Tensor) -> Tensor {
        match self {
            Pass::Train => t.clone(),
            Pass::Eval => t.detach(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct BatchNorm {
    weight: Tensor,
    bias: Tensor,
    running_mean: Var,
    running_var: Var,
    eps: f64,
}

impl BatchNorm {
    pub fn new(vb: VarBuilder, channels: usize) -> candle_core::Result<Self> {
        let weight = vb.get_with_hints(channels, "weight", Init::Const(1.))?;
        let bias = vb.get_with_hints(channels, "bias", Init::Const(0.))?;
        // Var::from_tensor shares storage with the variable store, so updates
        // land in checkpoints.
        let running_mean = Var::from_tensor(&vb.get_with_hints(channels, "running_mean", Init::Const(0.))?)?;
        let running_var = Var::from_tensor(&vb.get_with_hints(channels, "running_var", Init::Const(1.))?)?;
        Ok(Self {
            weight,
            bias,
            running_mean,
            running_var,
            eps: BN_EPS,
        })
    }

    pub fn channels(&self) -> usize {
        self.weight.dims()[0]
    }

    pub fn running_mean(&self) -> &Tensor {
        self.running_mean.as_tensor()
    }

    pub fn running_var(&self) -> &Tensor {
        self.running_var.as_tensor()
    }

    /// Accepts `(B, C)` or `(B, C, H, W)`.
    pub fn forward(&self, x: &Tensor, pass: Pass) -> candle_core::Result<Tensor> {
        let c = self.channels();
        let bshape: Vec<usize> = match x.rank() {
            2 => vec![1, c],
            4 => vec![1, c, 1, 1],
            r => candle_core::bail!("batch norm expects rank 2 or 4 input, got rank {r}"),
        };
        if x.dim(1)? != c {
            candle_core::bail!("batch norm over {c} channels got input {:?}", x.shape())
        }
        let w = pass.param(&self.weight).reshape(bshape.as_slice())?;
        let b = pass.param(&self.bias).reshape(bshape.as_slice())?;
        match pass {
            Pass::Eval => {
                let scale = (self.running_var.as_tensor().detach() + self.eps)?.sqrt()?.recip()?;
                let scale = scale.reshape(bshape.as_slice())?.mul(&w)?;
                let shift = b.sub(&self.running_mean.as_tensor().detach().reshape(bshape.as_slice())?.mul(&scale)?)?;
                x.broadcast_mul(&scale)?.broadcast_add(&shift)
            }
            Pass::Train => {
                let n = x.elem_count() / c;
                let mut mean = x.mean_keepdim(0)?;
                for d in 2..x.rank() {
                    mean = mean.mean_keepdim(d)?;
                }
                let centered = x.broadcast_sub(&mean)?;
                let mut var = centered.sqr()?.mean_keepdim(0)?;
                for d in 2..x.rank() {
                    var = var.mean_keepdim(d)?;
                }
                let inv = (var.clone() + self.eps)?.sqrt()?.recip()?;
                let y = centered.broadcast_mul(&inv.mul(&w)?)?.broadcast_add(&b)?;

                let m = BN_MOMENTUM;
                let batch_mean = mean.detach().flatten_all()?;
                let correction = if n > 1 { n as f64 / (n - 1) as f64 } else { 1.0 };
                let unbiased = (var.detach().flatten_all()? * correction)?;
                let rm = ((self.running_mean.as_tensor() * (1.0 - m))? + (batch_mean * m)?)?;
                let rv = ((self.running_var.as_tensor() * (1.0 - m))? + (unbiased * m)?)?;
                self.running_mean.set(&rm)?;
                self.running_var.set(&rv)?;
                Ok(y)
            }
        }
    }
}

/// Fully connected layer, `y = x W^T + b`.
#[derive(Debug, Clone)]
pub struct Dense {
    weight: Tensor,
    bias: Tensor,
}

impl Dense {
    pub fn new(vb: VarBuilder, in_features: usize, out_features: usize) -> candle_core::Result<Self> {
        let bound = 1. / (in_features as f64).sqrt();
        let weight = vb.get_with_hints((out_features, in_features), "weight", init::DEFAULT_KAIMING_NORMAL)?;
        let bias = vb.get_with_hints(
            out_features,
            "bias",
            Init::Uniform {
                lo: -bound,
                up: bound,
            },
        )?;
        Ok(Self { weight, bias })
    }

    pub fn weight(&self) -> &Tensor {
        &self.weight
    }

    pub fn in_features(&self) -> usize {
        self.weight.dims()[1]
    }

    pub fn out_features(&self) -> usize {
        self.weight.dims()[0]
    }

    pub fn forward(&self, x: &Tensor, pass: Pass) -> candle_core::Result<Tensor> {
        x.matmul(&pass.param(&self.weight).t()?)?
            .broadcast_add(&pass.param(&self.bias))
    }
}

/// Dense (ungrouped) 2-D convolution without bias, "same" padding.
#[derive(Debug, Clone)]
pub struct Conv {
    weight: Tensor,
    stride: usize,
}

impl Conv {
    pub fn new(vb: VarBuilder, in_ch: usize, out_ch: usize, kernel: usize, stride: usize) -> candle_core::Result<Self> {
        let weight = vb.get_with_hints((out_ch, in_ch, kernel, kernel), "weight", init::DEFAULT_KAIMING_NORMAL)?;
        Ok(Self { weight, stride })
    }

    pub fn weight(&self) -> &Tensor {
        &self.weight
    }

    pub fn kernel(&self) -> usize {
        self.weight.dims()[2]
    }

    pub fn in_channels(&self) -> usize {
        self.weight.dims()[1]
    }

    pub fn out_channels(&self) -> usize {
        self.weight.dims()[0]
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    pub fn forward(&self, x: &Tensor, pass: Pass) -> candle_core::Result<Tensor> {
        let w = pass.param(&self.weight);
        if self.kernel() == 1 && self.stride == 1 {
            // Pointwise: a batched matmul over the flattened spatial axis.
            let (b, c, h, wd) = x.dims4()?;
            let w2 = w.reshape((self.out_channels(), c))?;
            let y = w2
                .unsqueeze(0)?
                .broadcast_as((b, self.out_channels(), c))?
                .contiguous()?
                .matmul(&x.contiguous()?.reshape((b, c, h * wd))?)?;
            return y.reshape((b, self.out_channels(), h, wd));
        }
        x.conv2d(&w, (self.kernel() - 1) / 2, self.stride, 1, 1)
    }
}

/// Regular convolution, batch norm and an optional SiLU.
#[derive(Debug, Clone)]
pub struct ConvBnAct {
    conv: Conv,
    bn: BatchNorm,
    activation: bool,
}

impl ConvBnAct {
    /// Weight names follow `<prefix>.0.weight` and `<prefix>.1.{weight,bias,running_*}`.
    pub fn new(
        vb: VarBuilder,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        activation: bool,
    ) -> candle_core::Result<Self> {
        Ok(Self {
            conv: Conv::new(vb.pp("0"), in_channels, out_channels, kernel, stride)?,
            bn: BatchNorm::new(vb.pp("1"), out_channels)?,
            activation,
        })
    }

    pub fn conv(&self) -> &Conv {
        &self.conv
    }

    pub fn bn(&self) -> &BatchNorm {
        &self.bn
    }

    pub fn kernel(&self) -> usize {
        self.conv.kernel()
    }

    pub fn in_channels(&self) -> usize {
        self.conv.in_channels()
    }

    pub fn out_channels(&self) -> usize {
        self.conv.out_channels()
    }

    pub fn stride(&self) -> usize {
        self.conv.stride()
    }

    pub fn has_activation(&self) -> bool {
        self.activation
    }

    pub fn forward(&self, x: &Tensor, pass: Pass) -> candle_core::Result<Tensor> {
        let y = self.bn.forward(&self.conv.forward(x, pass)?, pass)?;
        if self.activation {
            y.silu()
        } else {
            Ok(y)
        }
    }
}

/// Per-channel convolution with a `(channels, 1, k, k)` kernel, batch norm and SiLU.
#[derive(Debug, Clone)]
pub struct DepthwiseBnAct {
    weight: Tensor,
    stride: usize,
    bn: BatchNorm,
}

impl DepthwiseBnAct {
    pub fn new(vb: VarBuilder, channels: usize, kernel: usize, stride: usize) -> candle_core::Result<Self> {
        let weight = vb
            .pp("0")
            .get_with_hints((channels, 1, kernel, kernel), "weight", init::DEFAULT_KAIMING_NORMAL)?;
        let bn = BatchNorm::new(vb.pp("1"), channels)?;
        Ok(Self { weight, stride, bn })
    }

    pub fn weight(&self) -> &Tensor {
        &self.weight
    }

    pub fn channels(&self) -> usize {
        self.weight.dims()[0]
    }

    pub fn kernel(&self) -> usize {
        self.weight.dims()[2]
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    pub fn forward(&self, x: &Tensor, pass: Pass) -> candle_core::Result<Tensor> {
        let k = self.kernel();
        let geo = Geometry {
            kernel: k,
            stride: self.stride,
            padding: (k - 1) / 2,
        };
        let y = depthwise_conv2d(x, &pass.param(&self.weight), geo)?;
        self.bn.forward(&y, pass)?.silu()
    }
}

/// Channel attention: global pool, reduce + SiLU, expand + sigmoid, rescale.
///
/// The two 1x1 convolutions keep their `(out, in, 1, 1)` weight shape so
/// stored weights load unchanged.
#[derive(Debug, Clone)]
pub struct SqueezeExcitation {
    reduce_w: Tensor,
    reduce_b: Tensor,
    expand_w: Tensor,
    expand_b: Tensor,
}

impl SqueezeExcitation {
    pub fn new(vb: VarBuilder, channels: usize, squeeze: usize) -> candle_core::Result<Self> {
        let conv = |vb: VarBuilder, i: usize, o: usize| -> candle_core::Result<(Tensor, Tensor)> {
            let bound = 1. / (i as f64).sqrt();
            Ok((
                vb.get_with_hints((o, i, 1, 1), "weight", init::DEFAULT_KAIMING_NORMAL)?,
                vb.get_with_hints(
                    o,
                    "bias",
                    Init::Uniform {
                        lo: -bound,
                        up: bound,
                    },
                )?,
            ))
        };
        let (reduce_w, reduce_b) = conv(vb.pp("fc1"), channels, squeeze)?;
        let (expand_w, expand_b) = conv(vb.pp("fc2"), squeeze, channels)?;
        Ok(Self {
            reduce_w,
            reduce_b,
            expand_w,
            expand_b,
        })
    }

    pub fn channels(&self) -> usize {
        self.reduce_w.dims()[1]
    }

    pub fn squeeze_channels(&self) -> usize {
        self.reduce_w.dims()[0]
    }

    pub fn forward(&self, x: &Tensor, pass: Pass) -> candle_core::Result<Tensor> {
        let (b, c, _, _) = x.dims4()?;
        let s = self.squeeze_channels();
        let pooled = x.mean(D::Minus1)?.mean(D::Minus1)?;
        let rw = pass.param(&self.reduce_w).reshape((s, c))?;
        let ew = pass.param(&self.expand_w).reshape((c, s))?;
        let z = pooled.matmul(&rw.t()?)?.broadcast_add(&pass.param(&self.reduce_b))?.silu()?;
        let z = z.matmul(&ew.t()?)?.broadcast_add(&pass.param(&self.expand_b))?;
        let scale = candle_nn::ops::sigmoid(&z)?.reshape((b, c, 1, 1))?;
        x.broadcast_mul(&scale)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use candle_core::{DType, Device};
    use candle_nn::VarMap;

    fn close(a: &Tensor, b: &Tensor, tol: f64) -> bool {
        let d = (a - b)
            .unwrap()
            .abs()
            .unwrap()
            .flatten_all()
            .unwrap()
            .max(0)
            .unwrap()
            .to_dtype(DType::F64)
            .unwrap()
            .to_scalar::<f64>()
            .unwrap();
        d < tol
    }

    #[test]
    fn pointwise_path_matches_conv2d() {
        let dev = Device::Cpu;
        let map = VarMap::new();
        let vb = VarBuilder::from_varmap(&map, DType::F32, &dev);
        let conv = Conv::new(vb, 6, 5, 1, 1).unwrap();
        let x = Tensor::randn(0f32, 1., (2, 6, 4, 3), &dev).unwrap();
        let reference = x.conv2d(conv.weight(), 0, 1, 1, 1).unwrap();
        assert!(close(&conv.forward(&x, Pass::Eval).unwrap(), &reference, 1e-5));
    }

    #[test]
    fn batch_norm_eval_uses_running_stats() {
        let dev = Device::Cpu;
        let map = VarMap::new();
        let vb = VarBuilder::from_varmap(&map, DType::F64, &dev);
        let bn = BatchNorm::new(vb, 2).unwrap();
        bn.running_mean.set(&Tensor::new(&[1.0f64, -2.0], &dev).unwrap()).unwrap();
        bn.running_var.set(&Tensor::new(&[4.0f64, 0.25], &dev).unwrap()).unwrap();
        let x = Tensor::new(&[[3.0f64, 0.0]], &dev).unwrap();
        let y = bn.forward(&x, Pass::Eval).unwrap().to_vec2::<f64>().unwrap();
        assert!((y[0][0] - 2.0 / (4.0 + BN_EPS).sqrt()).abs() < 1e-12);
        assert!((y[0][1] - 2.0 / (0.25 + BN_EPS).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn batch_norm_train_normalises_and_updates_store() {
        let dev = Device::Cpu;
        let map = VarMap::new();
        let vb = VarBuilder::from_varmap(&map, DType::F64, &dev);
        let bn = BatchNorm::new(vb, 1).unwrap();
        let x = Tensor::new(&[[1.0f64], [3.0], [5.0], [7.0]], &dev).unwrap();
        let y = bn.forward(&x, Pass::Train).unwrap().flatten_all().unwrap().to_vec1::<f64>().unwrap();
        let mean: f64 = y.iter().sum::<f64>() / 4.0;
        assert!(mean.abs() < 1e-12);
        // biased variance 5, unbiased 20/3
        let rm = map.data().lock().unwrap()["running_mean"].as_tensor().to_vec1::<f64>().unwrap();
        let rv = map.data().lock().unwrap()["running_var"].as_tensor().to_vec1::<f64>().unwrap();
        assert!((rm[0] - 0.4).abs() < 1e-12);
        assert!((rv[0] - (0.9 + 0.1 * 20.0 / 3.0)).abs() < 1e-12);
        assert!((y[0] - (-3.0 / (5.0 + BN_EPS).sqrt())).abs() < 1e-12);
    }

    #[test]
    fn eval_pass_builds_no_graph() {
        let dev = Device::Cpu;
        let map = VarMap::new();
        let vb = VarBuilder::from_varmap(&map, DType::F32, &dev);
        let dense = Dense::new(vb, 3, 2).unwrap();
        let x = Tensor::ones((1, 3), DType::F32, &dev).unwrap();
        let y = dense.forward(&x, Pass::Eval).unwrap().sum_all().unwrap();
        let grads = y.backward().unwrap();
        assert!(grads.get(dense.weight()).is_none());
        let y = dense.forward(&x, Pass::Train).unwrap().sum_all().unwrap();
        assert!(y.backward().unwrap().get(dense.weight()).is_some());
    }

    #[test]
    fn squeeze_excitation_matches_conv_route() {
        let dev = Device::Cpu;
        let map = VarMap::new();
        let vb = VarBuilder::from_varmap(&map, DType::F32, &dev);
        let se = SqueezeExcitation::new(vb, 8, 2).unwrap();
        let x = Tensor::randn(0f32, 1., (2, 8, 3, 3), &dev).unwrap();
        let pooled = x.mean_keepdim(3).unwrap().mean_keepdim(2).unwrap();
        let z = pooled
            .conv2d(&se.reduce_w, 0, 1, 1, 1)
            .unwrap()
            .broadcast_add(&se.reduce_b.reshape((1, 2, 1, 1)).unwrap())
            .unwrap()
            .silu()
            .unwrap();
        let z = z
            .conv2d(&se.expand_w, 0, 1, 1, 1)
            .unwrap()
            .broadcast_add(&se.expand_b.reshape((1, 8, 1, 1)).unwrap())
            .unwrap();
        let reference = x.broadcast_mul(&candle_nn::ops::sigmoid(&z).unwrap()).unwrap();
        assert!(close(&se.forward(&x, Pass::Eval).unwrap(), &reference, 1e-5));
    }
}
