use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{NnError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
    Identity,
}

impl Activation {
    fn apply(self, z: &mut Array2<f64>) {
        match self {
            Activation::Relu => z.mapv_inplace(|v| v.max(0.0)),
            Activation::Tanh => z.mapv_inplace(f64::tanh),
            Activation::Identity => {}
        }
    }

    /// Multiplies `grad` in place by the derivative, expressed through the
    /// post-activation output `a`.
    fn chain(self, grad: &mut Array2<f64>, a: &Array2<f64>) {
        match self {
            Activation::Relu => grad.zip_mut_with(a, |g, &y| {
                if y <= 0.0 {
                    *g = 0.0;
                }
            }),
            Activation::Tanh => grad.zip_mut_with(a, |g, &y| *g *= 1.0 - y * y),
            Activation::Identity => {}
        }
    }
}

/// Offsets of one layer's weight and bias blocks inside the flat parameter vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerSpan {
    pub fan_in: usize,
    pub fan_out: usize,
    pub weight_offset: usize,
    pub bias_offset: usize,
}

impl LayerSpan {
    pub fn end(&self) -> usize {
        self.bias_offset + self.fan_out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layer_sizes: Vec<usize>,
    activations: Vec<Activation>,
    layout: Vec<LayerSpan>,
    params: Vec<f64>,
}

/// Post-activation outputs of every layer for one batched forward pass.
/// `layers[0]` is the input batch, the last entry is the network output.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    layers: Vec<Array2<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> &Array2<f64> {
        self.layers.last().expect("cache always holds the input")
    }

    pub fn input(&self) -> &Array2<f64> {
        &self.layers[0]
    }
}

#[derive(Debug, Clone)]
pub struct Gradients {
    pub params: Vec<f64>,
    pub input: Array2<f64>,
}

fn build_layout(layer_sizes: &[usize]) -> Vec<LayerSpan> {
    let mut offset = 0;
    layer_sizes
        .windows(2)
        .map(|w| {
            let span = LayerSpan {
                fan_in: w[0],
                fan_out: w[1],
                weight_offset: offset,
                bias_offset: offset + w[0] * w[1],
            };
            offset = span.end();
            span
        })
        .collect()
}

pub fn param_count(layer_sizes: &[usize]) -> usize {
    layer_sizes.windows(2).map(|w| (w[0] + 1) * w[1]).sum()
}

impl Mlp {
    /// All-zero network. `activations` has one entry per weight layer.
    pub fn zeros(layer_sizes: &[usize], activations: &[Activation]) -> Result<Self> {
        if layer_sizes.len() < 2 {
            return Err(NnError::InvalidDefinition(
                "need at least an input and an output width".into(),
            ));
        }
        if layer_sizes.iter().any(|&w| w == 0) {
            return Err(NnError::InvalidDefinition("zero-width layer".into()));
        }
        if activations.len() != layer_sizes.len() - 1 {
            return Err(NnError::InvalidDefinition(format!(
                "{} layers but {} activations",
                layer_sizes.len() - 1,
                activations.len()
            )));
        }
        Ok(Self {
            layer_sizes: layer_sizes.to_vec(),
            activations: activations.to_vec(),
            layout: build_layout(layer_sizes),
            params: vec![0.0; param_count(layer_sizes)],
        })
    }

    /// Uniform init in +-1/sqrt(fan_in) for weights and biases. The final
    /// layer is additionally scaled by `output_scale`.
    pub fn new<R: Rng + ?Sized>(
        layer_sizes: &[usize],
        activations: &[Activation],
        output_scale: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let mut net = Self::zeros(layer_sizes, activations)?;
        let last = net.layout.len() - 1;
        for (i, span) in net.layout.iter().enumerate() {
            let bound = 1.0 / (span.fan_in as f64).sqrt();
            let scale = if i == last { output_scale } else { 1.0 };
            for p in &mut net.params[span.weight_offset..span.end()] {
                *p = rng.random_range(-bound..bound) * scale;
            }
        }
        Ok(net)
    }

    /// Hidden layers use `hidden`, the output layer uses `output`.
    pub fn with_hidden<R: Rng + ?Sized>(
        input: usize,
        hidden_sizes: &[usize],
        output: usize,
        hidden: Activation,
        out_activation: Activation,
        output_scale: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let mut sizes = Vec::with_capacity(hidden_sizes.len() + 2);
        sizes.push(input);
        sizes.extend_from_slice(hidden_sizes);
        sizes.push(output);
        let mut acts = vec![hidden; hidden_sizes.len()];
        acts.push(out_activation);
        Self::new(&sizes, &acts, output_scale, rng)
    }

    pub fn from_parts(
        layer_sizes: &[usize],
        activations: &[Activation],
        params: Vec<f64>,
    ) -> Result<Self> {
        let mut net = Self::zeros(layer_sizes, activations)?;
        if params.len() != net.params.len() {
            return Err(NnError::DimensionMismatch {
                expected: net.params.len(),
                got: params.len(),
            });
        }
        net.params = params;
        Ok(net)
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn activations(&self) -> &[Activation] {
        &self.activations
    }

    pub fn layout(&self) -> &[LayerSpan] {
        &self.layout
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn same_shape(&self, other: &Mlp) -> bool {
        self.layer_sizes == other.layer_sizes && self.activations == other.activations
    }

    fn weights(&self, span: &LayerSpan) -> ArrayView2<'_, f64> {
        ArrayView2::from_shape(
            (span.fan_out, span.fan_in),
            &self.params[span.weight_offset..span.bias_offset],
        )
        .expect("layout matches parameter vector")
    }

    /// Forward pass over a batch (one row per sample).
    pub fn forward_batch(&self, x: &Array2<f64>) -> Result<ForwardCache> {
        if x.ncols() != self.input_dim() {
            return Err(NnError::DimensionMismatch {
                expected: self.input_dim(),
                got: x.ncols(),
            });
        }
        let mut layers = Vec::with_capacity(self.layout.len() + 1);
        layers.push(x.clone());
        for (span, act) in self.layout.iter().zip(&self.activations) {
            let prev = layers.last().unwrap();
            let bias = ndarray::ArrayView1::from(&self.params[span.bias_offset..span.end()]);
            let mut z = prev.dot(&self.weights(span).t());
            z += &bias;
            act.apply(&mut z);
            layers.push(z);
        }
        Ok(ForwardCache { layers })
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        let batch = Array2::from_shape_vec((1, x.len()), x.to_vec())
            .expect("row vector shape is always valid");
        let cache = self.forward_batch(&batch)?;
        Ok(cache.output().row(0).to_vec())
    }

    /// Reverse-mode pass. `grad_out` is dLoss/dOutput for every row of the
    /// batch used to build `cache`.
    pub fn backward(&self, cache: &ForwardCache, grad_out: &Array2<f64>) -> Result<Gradients> {
        if cache.layers.len() != self.layout.len() + 1
            || cache
                .layers
                .iter()
                .zip(&self.layer_sizes)
                .any(|(a, &w)| a.ncols() != w)
        {
            return Err(NnError::StaleCache);
        }
        let out = cache.output();
        if grad_out.dim() != out.dim() {
            return Err(NnError::DimensionMismatch {
                expected: out.len(),
                got: grad_out.len(),
            });
        }

        let mut grads = vec![0.0; self.params.len()];
        let mut delta = grad_out.clone();
        let n_layers = self.layout.len();
        for l in (0..n_layers).rev() {
            let span = &self.layout[l];
            self.activations[l].chain(&mut delta, &cache.layers[l + 1]);
            let a_in = &cache.layers[l];
            let dw = delta.t().dot(a_in);
            let db: Array1<f64> = delta.sum_axis(Axis(0));
            grads[span.weight_offset..span.bias_offset]
                .iter_mut()
                .zip(dw.iter())
                .for_each(|(g, v)| *g = *v);
            grads[span.bias_offset..span.end()]
                .iter_mut()
                .zip(db.iter())
                .for_each(|(g, v)| *g = *v);
            delta = delta.dot(&self.weights(span));
        }
        Ok(Gradients {
            params: grads,
            input: delta,
        })
    }
}

/// An online network and its Polyak-averaged copy.
#[derive(Debug, Clone)]
pub struct TargetPair {
    pub online: Mlp,
    pub target: Mlp,
    pub tau: f64,
}

impl TargetPair {
    pub fn new(online: Mlp, tau: f64) -> Self {
        let target = online.clone();
        Self { online, target, tau }
    }

    /// `target <- tau * online + (1 - tau) * target`.
    pub fn polyak_update(&mut self) {
        let tau = self.tau;
        for (t, o) in self.target.params.iter_mut().zip(&self.online.params) {
            *t = tau * o + (1.0 - tau) * *t;
        }
    }
}
