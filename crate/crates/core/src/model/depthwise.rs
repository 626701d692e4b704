//! Native depthwise convolution for the CPU backend.
//!
//! candle lowers grouped convolutions to one convolution per group, which is
//! unusably slow for depthwise layers with ~1500 channels, and composing the op
//! from shifted views keeps `k * k` full-size intermediates alive for backprop.
//! These kernels work plane by plane with no extra allocations.

use candle_core::{CpuStorage, CustomOp2, Layout, Shape, Tensor, WithDType};
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Geometry {
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
}

impl Geometry {
    pub fn out_len(&self, len: usize) -> usize {
        (len + 2 * self.padding - self.kernel) / self.stride + 1
    }
}

fn contiguous<'a, T: WithDType>(s: &'a [T], l: &Layout, what: &str) -> candle_core::Result<&'a [T]> {
    match l.contiguous_offsets() {
        Some((a, b)) => Ok(&s[a..b]),
        None => candle_core::bail!("depthwise conv: {what} must be contiguous"),
    }
}

fn dims4(l: &Layout) -> candle_core::Result<(usize, usize, usize, usize)> {
    l.shape().dims4()
}

/// `out[b,c,i,j] = sum_{u,v} w[c,u,v] * x[b,c,i*s+u-p, j*s+v-p]`
struct Forward(Geometry);

/// Gradient w.r.t. the input, given the output gradient and the kernel.
struct GradInput {
    geo: Geometry,
    height: usize,
    width: usize,
}

/// Gradient w.r.t. the kernel, given the input and the output gradient.
struct GradWeight(Geometry);

fn forward_plane<T: WithDType>(x: &[T], w: &[T], out: &mut [T], h: usize, wd: usize, ho: usize, wo: usize, g: Geometry) {
    let k = g.kernel;
    for i in 0..ho {
        for j in 0..wo {
            let mut acc = T::zero();
            for u in 0..k {
                let y = (i * g.stride + u) as isize - g.padding as isize;
                if y < 0 || y >= h as isize {
                    continue;
                }
                let row = y as usize * wd;
                for v in 0..k {
                    let xx = (j * g.stride + v) as isize - g.padding as isize;
                    if xx < 0 || xx >= wd as isize {
                        continue;
                    }
                    acc += w[u * k + v] * x[row + xx as usize];
                }
            }
            out[i * wo + j] = acc;
        }
    }
}

fn grad_input_plane<T: WithDType>(gout: &[T], w: &[T], gx: &mut [T], h: usize, wd: usize, ho: usize, wo: usize, g: Geometry) {
    let k = g.kernel;
    for i in 0..ho {
        for j in 0..wo {
            let go = gout[i * wo + j];
            for u in 0..k {
                let y = (i * g.stride + u) as isize - g.padding as isize;
                if y < 0 || y >= h as isize {
                    continue;
                }
                let row = y as usize * wd;
                for v in 0..k {
                    let xx = (j * g.stride + v) as isize - g.padding as isize;
                    if xx < 0 || xx >= wd as isize {
                        continue;
                    }
                    gx[row + xx as usize] += w[u * k + v] * go;
                }
            }
        }
    }
}

fn grad_weight_plane<T: WithDType>(x: &[T], gout: &[T], gw: &mut [T], h: usize, wd: usize, ho: usize, wo: usize, g: Geometry) {
    let k = g.kernel;
    for u in 0..k {
        for v in 0..k {
            let mut acc = T::zero();
            for i in 0..ho {
                let y = (i * g.stride + u) as isize - g.padding as isize;
                if y < 0 || y >= h as isize {
                    continue;
                }
                let row = y as usize * wd;
                for j in 0..wo {
                    let xx = (j * g.stride + v) as isize - g.padding as isize;
                    if xx < 0 || xx >= wd as isize {
                        continue;
                    }
                    acc += x[row + xx as usize] * gout[i * wo + j];
                }
            }
            gw[u * k + v] += acc;
        }
    }
}

fn run_forward<T: WithDType>(x: &[T], lx: &Layout, w: &[T], lw: &Layout, g: Geometry) -> candle_core::Result<(Vec<T>, Shape)> {
    let (b, c, h, wd) = dims4(lx)?;
    let (wc, _, kh, kw) = dims4(lw)?;
    if wc != c || kh != g.kernel || kw != g.kernel {
        candle_core::bail!("depthwise kernel {:?} does not fit input {:?}", lw.shape(), lx.shape())
    }
    let (ho, wo) = (g.out_len(h), g.out_len(wd));
    let x = contiguous(x, lx, "input")?;
    let w = contiguous(w, lw, "kernel")?;
    let kk = g.kernel * g.kernel;
    let mut out = vec![T::zero(); b * c * ho * wo];
    out.par_chunks_mut(ho * wo).enumerate().for_each(|(plane, dst)| {
        let ch = plane % c;
        forward_plane(&x[plane * h * wd..(plane + 1) * h * wd], &w[ch * kk..(ch + 1) * kk], dst, h, wd, ho, wo, g);
    });
    Ok((out, Shape::from((b, c, ho, wo))))
}

fn run_grad_input<T: WithDType>(
    gout: &[T],
    lg: &Layout,
    w: &[T],
    lw: &Layout,
    g: Geometry,
    h: usize,
    wd: usize,
) -> candle_core::Result<(Vec<T>, Shape)> {
    let (b, c, ho, wo) = dims4(lg)?;
    let gout = contiguous(gout, lg, "output gradient")?;
    let w = contiguous(w, lw, "kernel")?;
    let kk = g.kernel * g.kernel;
    let mut gx = vec![T::zero(); b * c * h * wd];
    gx.par_chunks_mut(h * wd).enumerate().for_each(|(plane, dst)| {
        let ch = plane % c;
        grad_input_plane(&gout[plane * ho * wo..(plane + 1) * ho * wo], &w[ch * kk..(ch + 1) * kk], dst, h, wd, ho, wo, g);
    });
    Ok((gx, Shape::from((b, c, h, wd))))
}

fn run_grad_weight<T: WithDType>(x: &[T], lx: &Layout, gout: &[T], lg: &Layout, g: Geometry) -> candle_core::Result<(Vec<T>, Shape)> {
    let (b, c, h, wd) = dims4(lx)?;
    let (_, _, ho, wo) = dims4(lg)?;
    let x = contiguous(x, lx, "input")?;
    let gout = contiguous(gout, lg, "output gradient")?;
    let kk = g.kernel * g.kernel;
    let mut gw = vec![T::zero(); c * kk];
    gw.par_chunks_mut(kk).enumerate().for_each(|(ch, dst)| {
        for bi in 0..b {
            let plane = bi * c + ch;
            grad_weight_plane(&x[plane * h * wd..(plane + 1) * h * wd], &gout[plane * ho * wo..(plane + 1) * ho * wo], dst, h, wd, ho, wo, g);
        }
    });
    Ok((gw, Shape::from((c, 1, g.kernel, g.kernel))))
}

macro_rules! dispatch {
    ($s1:expr, $s2:expr, $name:expr, |$a:ident, $b:ident| $body:expr) => {
        match ($s1, $s2) {
            (CpuStorage::F32($a), CpuStorage::F32($b)) => {
                let (v, s) = $body?;
                Ok((CpuStorage::F32(v), s))
            }
            (CpuStorage::F64($a), CpuStorage::F64($b)) => {
                let (v, s) = $body?;
                Ok((CpuStorage::F64(v), s))
            }
            _ => candle_core::bail!("{}: only matching f32/f64 inputs are supported", $name),
        }
    };
}

impl CustomOp2 for Forward {
    fn name(&self) -> &'static str {
        "depthwise-conv2d"
    }

    fn cpu_fwd(&self, s1: &CpuStorage, l1: &Layout, s2: &CpuStorage, l2: &Layout) -> candle_core::Result<(CpuStorage, Shape)> {
        dispatch!(s1, s2, self.name(), |x, w| run_forward(x, l1, w, l2, self.0))
    }

    fn bwd(&self, x: &Tensor, w: &Tensor, _res: &Tensor, grad: &Tensor) -> candle_core::Result<(Option<Tensor>, Option<Tensor>)> {
        let (_, _, h, wd) = x.dims4()?;
        let grad = grad.contiguous()?;
        let gx = grad.apply_op2_no_bwd(
            &w.contiguous()?,
            &GradInput {
                geo: self.0,
                height: h,
                width: wd,
            },
        )?;
        let gw = x.contiguous()?.apply_op2_no_bwd(&grad, &GradWeight(self.0))?;
        Ok((Some(gx), Some(gw)))
    }
}

impl CustomOp2 for GradInput {
    fn name(&self) -> &'static str {
        "depthwise-conv2d-grad-input"
    }

    fn cpu_fwd(&self, s1: &CpuStorage, l1: &Layout, s2: &CpuStorage, l2: &Layout) -> candle_core::Result<(CpuStorage, Shape)> {
        dispatch!(s1, s2, self.name(), |g, w| run_grad_input(g, l1, w, l2, self.geo, self.height, self.width))
    }
}

impl CustomOp2 for GradWeight {
    fn name(&self) -> &'static str {
        "depthwise-conv2d-grad-weight"
    }

    fn cpu_fwd(&self, s1: &CpuStorage, l1: &Layout, s2: &CpuStorage, l2: &Layout) -> candle_core::Result<(CpuStorage, Shape)> {
        dispatch!(s1, s2, self.name(), |x, g| run_grad_weight(x, l1, g, l2, self.0))
    }
}

/// `(B, C, H, W)` input, `(C, 1, k, k)` kernel.
pub(crate) fn depthwise_conv2d(x: &Tensor, weight: &Tensor, geo: Geometry) -> candle_core::Result<Tensor> {
    x.contiguous()?.apply_op2(&weight.contiguous()?, Forward(geo))
}

#[cfg(test)]
mod tests {
    use super::*;
    use candle_core::{DType, Device, Var};

    fn max_abs_diff(a: &Tensor, b: &Tensor) -> f64 {
        (a - b)
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
            .unwrap()
    }

    // Reference route: the same convolution composed from shifted views, so
    // candle's autograd provides the gradients.
    fn shifted_views(x: &Tensor, w: &Tensor, g: Geometry) -> Tensor {
        let (_, c, h, wd) = x.dims4().unwrap();
        let p = g.padding;
        let xp = x.pad_with_zeros(2, p, p).unwrap().pad_with_zeros(3, p, p).unwrap();
        let (h1, w1) = (h + 2 * p + 1 - g.kernel, wd + 2 * p + 1 - g.kernel);
        let mut acc: Option<Tensor> = None;
        for u in 0..g.kernel {
            for v in 0..g.kernel {
                let tap = w.narrow(2, u, 1).unwrap().narrow(3, v, 1).unwrap().reshape((1, c, 1, 1)).unwrap();
                let term = xp.narrow(2, u, h1).unwrap().narrow(3, v, w1).unwrap().broadcast_mul(&tap).unwrap();
                acc = Some(match acc {
                    None => term,
                    Some(a) => (a + term).unwrap(),
                });
            }
        }
        let out = acc.unwrap().contiguous().unwrap();
        let rows: Vec<u32> = (0..h1).step_by(g.stride).map(|v| v as u32).collect();
        let cols: Vec<u32> = (0..w1).step_by(g.stride).map(|v| v as u32).collect();
        out.index_select(&Tensor::new(rows.as_slice(), x.device()).unwrap(), 2)
            .unwrap()
            .index_select(&Tensor::new(cols.as_slice(), x.device()).unwrap(), 3)
            .unwrap()
    }

    const CASES: [(usize, usize, usize, usize); 5] = [(7, 9, 3, 1), (8, 8, 3, 2), (9, 6, 3, 2), (5, 5, 5, 1), (4, 4, 1, 1)];

    #[test]
    fn forward_matches_grouped_conv() {
        let dev = Device::Cpu;
        for &(h, w, k, s) in &CASES {
            let c = 5;
            let x = Tensor::randn(0f32, 1., (2, c, h, w), &dev).unwrap();
            let wt = Tensor::randn(0f32, 1., (c, 1, k, k), &dev).unwrap();
            let g = Geometry {
                kernel: k,
                stride: s,
                padding: (k - 1) / 2,
            };
            let reference = x.conv2d(&wt, g.padding, s, 1, c).unwrap();
            let ours = depthwise_conv2d(&x, &wt, g).unwrap();
            assert_eq!(reference.dims(), ours.dims());
            assert!(max_abs_diff(&reference, &ours) < 1e-4, "h={h} w={w} k={k} s={s}");
        }
    }

    #[test]
    fn gradients_match_autograd_reference() {
        let dev = Device::Cpu;
        for &(h, w, k, s) in &CASES {
            let c = 3;
            let g = Geometry {
                kernel: k,
                stride: s,
                padding: (k - 1) / 2,
            };
            let x = Var::randn(0f64, 1., (2, c, h, w), &dev).unwrap();
            let wt = Var::randn(0f64, 1., (c, 1, k, k), &dev).unwrap();
            let probe = Tensor::randn(0f64, 1., (2, c, g.out_len(h), g.out_len(w)), &dev).unwrap();

            let ours = (depthwise_conv2d(x.as_tensor(), wt.as_tensor(), g).unwrap() * &probe).unwrap().sum_all().unwrap();
            let theirs = (shifted_views(x.as_tensor(), wt.as_tensor(), g) * &probe).unwrap().sum_all().unwrap();
            let go = ours.backward().unwrap();
            let gt = theirs.backward().unwrap();
            assert!(max_abs_diff(go.get(&x).unwrap(), gt.get(&x).unwrap()) < 1e-10);
            assert!(max_abs_diff(go.get(&wt).unwrap(), gt.get(&wt).unwrap()) < 1e-10);
        }
    }

    #[test]
    fn mismatched_kernel_is_an_error() {
        let dev = Device::Cpu;
        let x = Tensor::zeros((1, 3, 5, 5), DType::F32, &dev).unwrap();
        let w = Tensor::zeros((4, 1, 3, 3), DType::F32, &dev).unwrap();
        let g = Geometry {
            kernel: 3,
            stride: 1,
            padding: 1,
        };
        assert!(depthwise_conv2d(&x, &w, g).is_err());
    }
}
