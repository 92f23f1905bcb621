use ndarray::{Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::params::{Bound, ParamSet};
use super::tape::{Matrix, Tape, Var};
use crate::error::{check_dim, check_finite, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Relu,
    Tanh,
}

/// Fully connected network shape. The output layer is linear.
pub const OUTPUT_LAYER_SCALE: f64 = 1e-2;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub input_dim: usize,
    pub output_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub activation: Activation,
}

impl MlpSpec {
    pub fn new(input_dim: usize, output_dim: usize, hidden_dims: Vec<usize>) -> Self {
        Self {
            input_dim,
            output_dim,
            hidden_dims,
            activation: Activation::Relu,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.output_dim == 0 {
            return Err(Error::Config("network input/output dims must be positive".into()));
        }
        if self.hidden_dims.is_empty() || self.hidden_dims.contains(&0) {
            return Err(Error::Config(
                "hidden_dims must be a nonempty list of positive sizes".into(),
            ));
        }
        Ok(())
    }

    fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.hidden_dims.len() + 1);
        let mut prev = self.input_dim;
        for &h in &self.hidden_dims {
            dims.push((prev, h));
            prev = h;
        }
        dims.push((prev, self.output_dim));
        dims
    }

    pub fn num_layers(&self) -> usize {
        self.hidden_dims.len() + 1
    }

    /// Fan-in uniform initialization, with the output layer shrunk by `final_scale`
    /// (learners use [`OUTPUT_LAYER_SCALE`]).
    pub fn init(&self, rng: &mut impl Rng, final_scale: f64) -> Result<ParamSet> {
        self.validate()?;
        let dims = self.layer_dims();
        let last = dims.len() - 1;
        let mut params = ParamSet::new();
        for (i, (fan_in, fan_out)) in dims.into_iter().enumerate() {
            let mut bound = 1.0 / (fan_in as f64).sqrt();
            if i == last {
                bound *= final_scale;
            }
            let w = Array2::from_shape_simple_fn((fan_in, fan_out), || rng.random_range(-bound..=bound));
            let b = Array2::from_shape_simple_fn((1, fan_out), || rng.random_range(-bound..=bound));
            params.insert(format!("l{i}.w"), w)?;
            params.insert(format!("l{i}.b"), b)?;
        }
        Ok(params)
    }

    /// Record a forward pass on the tape. `x` is `batch x input_dim`.
    pub fn forward(&self, tape: &mut Tape, params: &Bound, x: Var) -> Var {
        let layers = self.num_layers();
        let mut h = x;
        for i in 0..layers {
            h = tape.affine(h, params.var(2 * i), params.var(2 * i + 1));
            if i + 1 < layers {
                h = match self.activation {
                    Activation::Relu => tape.relu(h),
                    Activation::Tanh => tape.tanh(h),
                };
            }
        }
        h
    }

    /// Tape-free batched forward pass.
    pub fn forward_batch(&self, params: &ParamSet, input: ArrayView2<'_, f64>) -> Result<Matrix> {
        check_dim("mlp input", self.input_dim, input.ncols())?;
        let layers = self.num_layers();
        if params.len() != 2 * layers {
            return Err(Error::Dimension {
                context: "mlp parameter count",
                expected: 2 * layers,
                got: params.len(),
            });
        }
        let mut h = input.dot(params.at(0)) + params.at(1);
        for i in 1..layers {
            match self.activation {
                Activation::Relu => h.mapv_inplace(|v| v.max(0.0)),
                Activation::Tanh => h.mapv_inplace(f64::tanh),
            }
            h = h.dot(params.at(2 * i)) + params.at(2 * i + 1);
        }
        Ok(h)
    }
}

/// Evaluate a network on one input vector.
pub fn mlp_forward(spec: &MlpSpec, params: &ParamSet, input: &[f64]) -> Result<Vec<f64>> {
    check_finite("mlp_forward", input)?;
    let x = ArrayView2::from_shape((1, input.len()), input).map_err(|e| Error::Domain(e.to_string()))?;
    let out = spec.forward_batch(params, x)?;
    Ok(out.index_axis(Axis(0), 0).to_vec())
}
