//! Reproducible parameter initialisation.
//!
//! candle cannot seed its CPU generator, so variables are created here from a
//! ChaCha stream keyed by `(seed, variable name)` and then inserted into the
//! shared [`VarMap`]. Existing variables are returned untouched.

use candle_core::{DType, Device, Shape, Tensor, Var};
use candle_nn::init::NormalOrUniform;
use candle_nn::var_builder::SimpleBackend;
use candle_nn::{Init, VarBuilder, VarMap};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::seed;

pub struct SeededVarMap {
    map: VarMap,
    seed: u64,
}

impl SeededVarMap {
    pub fn new(map: VarMap, seed: u64) -> Self {
        Self { map, seed }
    }

    pub fn into_var_builder(self, dtype: DType, device: &Device) -> VarBuilder<'static> {
        VarBuilder::from_backend(Box::new(self), dtype, device.clone())
    }

    fn sample(&self, shape: &Shape, name: &str, init: Init) -> Vec<f64> {
        let n = shape.elem_count();
        let mut rng = seed::rng(seed::derive(self.seed, seed::MODEL_INIT, &[]), name, &[]);
        match init {
            Init::Const(v) => vec![v; n],
            Init::Uniform { lo, up } => (0..n).map(|_| rng.random_range(lo..up)).collect(),
            Init::Randn { mean, stdev } => (0..n)
                .map(|_| mean + stdev * { let z: f64 = StandardNormal.sample(&mut rng); z })
                .collect::<Vec<f64>>(),
            Init::Kaiming {
                dist,
                fan,
                non_linearity,
            } => {
                let fan = fan.for_shape(shape);
                let std = non_linearity.gain() / (fan.max(1) as f64).sqrt();
                match dist {
                    NormalOrUniform::Uniform => {
                        let bound = 3f64.sqrt() * std;
                        (0..n).map(|_| rng.random_range(-bound..bound)).collect()
                    }
                    NormalOrUniform::Normal => (0..n)
                        .map(|_| std * { let z: f64 = StandardNormal.sample(&mut rng); z })
                        .collect::<Vec<f64>>(),
                }
            }
        }
    }
}

impl SimpleBackend for SeededVarMap {
    fn get(
        &self,
        s: Shape,
        name: &str,
        h: Init,
        dtype: DType,
        dev: &Device,
    ) -> candle_core::Result<Tensor> {
        let mut data = self.map.data().lock().unwrap();
        if let Some(existing) = data.get(name) {
            if existing.shape() != &s {
                candle_core::bail!(
                    "shape mismatch on {name}: {s:?} <> {:?}",
                    existing.shape()
                )
            }
            return Ok(existing.as_tensor().clone());
        }
        let values = self.sample(&s, name, h);
        let tensor = Tensor::from_vec(values, s, dev)?.to_dtype(dtype)?;
        let var = Var::from_tensor(&tensor)?;
        let out = var.as_tensor().clone();
        data.insert(name.to_string(), var);
        Ok(out)
    }

    fn contains_tensor(&self, name: &str) -> bool {
        self.map.data().lock().unwrap().contains_key(name)
    }
}
