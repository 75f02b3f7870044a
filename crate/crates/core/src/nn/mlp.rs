use ndarray::linalg::general_mat_mul;
use ndarray::{Array2, ArrayView1, ArrayView2, ArrayViewMut2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{NdpError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Tanh,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MlpSpec {
    pub input_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub output_dim: usize,
    #[serde(default)]
    pub activation: Activation,
}

impl MlpSpec {
    pub fn new(input_dim: usize, hidden_dims: &[usize], output_dim: usize) -> Self {
        Self {
            input_dim,
            hidden_dims: hidden_dims.to_vec(),
            output_dim,
            activation: Activation::Tanh,
        }
    }

    fn dims(&self) -> Vec<usize> {
        let mut dims = vec![self.input_dim];
        dims.extend(&self.hidden_dims);
        dims.push(self.output_dim);
        dims
    }

    pub fn num_params(&self) -> usize {
        self.dims().windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims().contains(&0) {
            return Err(NdpError::Config(format!("all layer sizes must be positive: {:?}", self.dims())));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Layer {
    fan_in: usize,
    fan_out: usize,
    /// Offset of the `fan_out x fan_in` row-major weight block.
    weight: usize,
    bias: usize,
}

/// Dense tanh network whose parameters live in one flat buffer, so optimizers,
/// clipping and checkpoints can treat them as a single vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    spec: MlpSpec,
    layers: Vec<Layer>,
    params: Vec<f64>,
    generation: u64,
}

/// Activations recorded by [`Mlp::forward`]. `activations[0]` is the input and
/// `activations[l]` the output of layer `l`.
#[derive(Debug, Clone)]
pub struct MlpCache {
    activations: Vec<Array2<f64>>,
    generation: u64,
}

impl MlpCache {
    pub fn output(&self) -> &Array2<f64> {
        self.activations.last().expect("cache holds the input at least")
    }

    pub fn batch_size(&self) -> usize {
        self.activations[0].nrows()
    }
}

impl Mlp {
    pub fn zeros(spec: MlpSpec) -> Self {
        let dims = spec.dims();
        let mut layers = Vec::with_capacity(dims.len() - 1);
        let mut offset = 0;
        for w in dims.windows(2) {
            layers.push(Layer {
                fan_in: w[0],
                fan_out: w[1],
                weight: offset,
                bias: offset + w[0] * w[1],
            });
            offset += w[0] * w[1] + w[1];
        }
        Self {
            spec,
            layers,
            params: vec![0.0; offset],
            generation: 0,
        }
    }

    /// Uniform `+-1/sqrt(fan_in)` initialisation, with the last layer scaled
    /// by `output_scale`.
    pub fn init<R: Rng>(spec: MlpSpec, output_scale: f64, rng: &mut R) -> Self {
        let mut mlp = Self::zeros(spec);
        let last = mlp.layers.len() - 1;
        for (l, layer) in mlp.layers.clone().into_iter().enumerate() {
            let bound = 1.0 / (layer.fan_in as f64).sqrt();
            let scale = if l == last { output_scale } else { 1.0 };
            let end = layer.bias + layer.fan_out;
            for p in &mut mlp.params[layer.weight..end] {
                *p = rng.random_range(-bound..bound) * scale;
            }
        }
        mlp
    }

    pub fn from_params(spec: MlpSpec, params: Vec<f64>) -> Result<Self> {
        let mut mlp = Self::zeros(spec);
        if params.len() != mlp.params.len() {
            return Err(NdpError::Shape(format!(
                "{} parameters supplied, network needs {}",
                params.len(),
                mlp.params.len()
            )));
        }
        mlp.params = params;
        Ok(mlp)
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    /// Mutable access invalidates caches taken before it.
    pub fn params_mut(&mut self) -> &mut [f64] {
        self.generation += 1;
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    fn weight(&self, layer: &Layer) -> ArrayView2<'_, f64> {
        ArrayView2::from_shape((layer.fan_out, layer.fan_in), &self.params[layer.weight..layer.bias]).expect("layer layout is consistent")
    }

    fn bias(&self, layer: &Layer) -> ArrayView1<'_, f64> {
        ArrayView1::from(&self.params[layer.bias..layer.bias + layer.fan_out])
    }

    /// Forward pass over a `batch x input_dim` matrix.
    pub fn forward(&self, input: ArrayView2<'_, f64>) -> Result<MlpCache> {
        if input.ncols() != self.spec.input_dim {
            return Err(NdpError::Shape(format!(
                "input has {} columns, network expects {}",
                input.ncols(),
                self.spec.input_dim
            )));
        }
        let last = self.layers.len() - 1;
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(input.to_owned());
        for (l, layer) in self.layers.iter().enumerate() {
            let prev = &activations[l];
            let mut z = Array2::zeros((prev.nrows(), layer.fan_out));
            z += &self.bias(layer);
            general_mat_mul(1.0, prev, &self.weight(layer).t(), 1.0, &mut z);
            if l != last {
                z.mapv_inplace(f64::tanh);
            }
            activations.push(z);
        }
        Ok(MlpCache {
            activations,
            generation: self.generation,
        })
    }

    pub fn forward_one(&self, input: &[f64]) -> Result<Vec<f64>> {
        let view = ArrayView2::from_shape((1, input.len()), input).expect("row view");
        Ok(self.forward(view)?.output().row(0).to_vec())
    }

    /// Reverse pass. Returns the flat parameter gradient of `sum(d_out * out)`.
    pub fn backward(&self, cache: &MlpCache, d_out: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
        Ok(self.backward_full(cache, d_out)?.0)
    }

    /// Reverse pass that also returns the gradient with respect to the input.
    pub fn backward_full(&self, cache: &MlpCache, d_out: ArrayView2<'_, f64>) -> Result<(Vec<f64>, Array2<f64>)> {
        if cache.generation != self.generation {
            return Err(NdpError::Shape("stale forward cache: parameters changed since the forward pass".into()));
        }
        if d_out.dim() != cache.output().dim() {
            return Err(NdpError::Shape(format!(
                "upstream gradient {:?} does not match output {:?}",
                d_out.dim(),
                cache.output().dim()
            )));
        }
        let mut grads = vec![0.0; self.params.len()];
        let mut delta = d_out.to_owned();
        for (l, layer) in self.layers.iter().enumerate().rev() {
            let input = &cache.activations[l];
            {
                let mut d_w =
                    ArrayViewMut2::from_shape((layer.fan_out, layer.fan_in), &mut grads[layer.weight..layer.bias]).expect("layer layout is consistent");
                general_mat_mul(1.0, &delta.t(), input, 0.0, &mut d_w);
            }
            let d_b = delta.sum_axis(Axis(0));
            grads[layer.bias..layer.bias + layer.fan_out].copy_from_slice(d_b.as_slice().expect("contiguous"));

            let mut d_in = Array2::zeros((delta.nrows(), layer.fan_in));
            general_mat_mul(1.0, &delta, &self.weight(layer), 0.0, &mut d_in);
            if l > 0 {
                // Input of this layer is a tanh output.
                d_in.zip_mut_with(input, |d, &a| *d *= 1.0 - a * a);
            }
            delta = d_in;
        }
        Ok((grads, delta))
    }
}

/// Row-major batch from a list of equally long vectors.
pub fn batch_from_rows(rows: &[&[f64]]) -> Array2<f64> {
    let cols = rows.first().map_or(0, |r| r.len());
    let mut out = Array2::zeros((rows.len(), cols));
    for (mut dst, src) in out.rows_mut().into_iter().zip(rows) {
        dst.assign(&ArrayView1::from(*src));
    }
    out
}

/// Plain per-sample matrix-vector implementation used to cross-check the
/// batched path.
#[doc(hidden)]
pub fn reference_forward(mlp: &Mlp, input: &[f64]) -> Vec<f64> {
    let mut a: Vec<f64> = input.to_vec();
    let last = mlp.layers.len() - 1;
    for (l, layer) in mlp.layers.iter().enumerate() {
        let mut out = Vec::with_capacity(layer.fan_out);
        for o in 0..layer.fan_out {
            let row = &mlp.params[layer.weight + o * layer.fan_in..layer.weight + (o + 1) * layer.fan_in];
            let mut z = mlp.params[layer.bias + o];
            for (w, x) in row.iter().zip(&a) {
                z += w * x;
            }
            out.push(if l == last { z } else { z.tanh() });
        }
        a = out;
    }
    a
}
