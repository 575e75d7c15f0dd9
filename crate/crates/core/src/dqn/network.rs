use rand::Rng;
use serde::{Deserialize, Serialize};

use super::DqnError;

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

fn silu(z: f64) -> f64 {
    z * sigmoid(z)
}

fn silu_grad(z: f64) -> f64 {
    let s = sigmoid(z);
    s * (1.0 + z * (1.0 - s))
}

/// Fully connected network with SiLU hidden layers and one linear output.
///
/// All weights and biases live in one flat vector; layer `l` stores its
/// `out x in` weight matrix row-major followed by its `out` biases.
#[derive(Debug, Clone, PartialEq)]
pub struct QNetwork {
    sizes: Vec<usize>,
    params: Vec<f64>,
}

/// Intermediate values of one forward pass, reused by [`QNetwork::backward`].
#[derive(Debug, Default, Clone)]
pub struct ForwardCache {
    /// Input followed by every layer's post-activation output.
    acts: Vec<Vec<f64>>,
    /// Every layer's pre-activation.
    pre: Vec<Vec<f64>>,
}

impl QNetwork {
    /// Weights and biases drawn from `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
    pub fn new<R: Rng + ?Sized>(inputs: usize, hidden: &[usize], rng: &mut R) -> Self {
        let mut sizes = vec![inputs];
        sizes.extend_from_slice(hidden);
        sizes.push(1);
        let mut params = Vec::with_capacity(Self::count(&sizes));
        for w in sizes.windows(2) {
            let bound = 1.0 / (w[0] as f64).sqrt();
            params.extend((0..w[0] * w[1] + w[1]).map(|_| rng.random_range(-bound..bound)));
        }
        Self { sizes, params }
    }

    pub fn zeros(inputs: usize, hidden: &[usize]) -> Self {
        let mut sizes = vec![inputs];
        sizes.extend_from_slice(hidden);
        sizes.push(1);
        Self {
            params: vec![0.0; Self::count(&sizes)],
            sizes,
        }
    }

    /// Builds a network from per-layer `(inputs, outputs, weights, biases)`.
    pub fn from_layers(layers: &[LayerParams]) -> Result<Self, DqnError> {
        let first = layers
            .first()
            .ok_or_else(|| DqnError::Shape("network has no layers".into()))?;
        let mut sizes = vec![first.inputs];
        let mut params = Vec::new();
        for layer in layers {
            if layer.inputs != *sizes.last().unwrap()
                || layer.weights.len() != layer.inputs * layer.outputs
                || layer.biases.len() != layer.outputs
            {
                return Err(DqnError::Shape(format!(
                    "layer {}x{} has {} weights and {} biases",
                    layer.outputs,
                    layer.inputs,
                    layer.weights.len(),
                    layer.biases.len()
                )));
            }
            sizes.push(layer.outputs);
            params.extend_from_slice(&layer.weights);
            params.extend_from_slice(&layer.biases);
        }
        if *sizes.last().unwrap() != 1 {
            return Err(DqnError::Shape("output layer must have one unit".into()));
        }
        Ok(Self { sizes, params })
    }

    pub fn layers(&self) -> Vec<LayerParams> {
        let mut offset = 0;
        self.sizes
            .windows(2)
            .map(|w| {
                let (n_in, n_out) = (w[0], w[1]);
                let weights = self.params[offset..offset + n_in * n_out].to_vec();
                offset += n_in * n_out;
                let biases = self.params[offset..offset + n_out].to_vec();
                offset += n_out;
                LayerParams {
                    inputs: n_in,
                    outputs: n_out,
                    weights,
                    biases,
                }
            })
            .collect()
    }

    fn count(sizes: &[usize]) -> usize {
        sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    pub fn input_len(&self) -> usize {
        self.sizes[0]
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    fn check_input(&self, x: &[f64]) -> Result<(), DqnError> {
        if x.len() == self.sizes[0] {
            Ok(())
        } else {
            Err(DqnError::Shape(format!(
                "feature length {} does not match input layer {}",
                x.len(),
                self.sizes[0]
            )))
        }
    }

    pub fn forward(&self, x: &[f64]) -> Result<f64, DqnError> {
        self.check_input(x)?;
        let mut cur = x.to_vec();
        let mut next = Vec::new();
        let mut offset = 0;
        let layers = self.sizes.len() - 1;
        for (l, w) in self.sizes.windows(2).enumerate() {
            let (n_in, n_out) = (w[0], w[1]);
            let weights = &self.params[offset..offset + n_in * n_out];
            let biases = &self.params[offset + n_in * n_out..offset + n_in * n_out + n_out];
            next.clear();
            for (row, b) in weights.chunks_exact(n_in).zip(biases) {
                let z = b + row.iter().zip(&cur).map(|(a, b)| a * b).sum::<f64>();
                next.push(if l + 1 < layers { silu(z) } else { z });
            }
            offset += n_in * n_out + n_out;
            std::mem::swap(&mut cur, &mut next);
        }
        Ok(cur[0])
    }

    /// Forward pass that keeps what [`Self::backward`] needs.
    pub fn forward_cached(&self, x: &[f64], cache: &mut ForwardCache) -> Result<f64, DqnError> {
        self.check_input(x)?;
        let layers = self.sizes.len() - 1;
        cache.acts.resize(layers + 1, Vec::new());
        cache.pre.resize(layers, Vec::new());
        cache.acts[0].clear();
        cache.acts[0].extend_from_slice(x);
        let mut offset = 0;
        for l in 0..layers {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let weights = &self.params[offset..offset + n_in * n_out];
            let biases = &self.params[offset + n_in * n_out..offset + n_in * n_out + n_out];
            let (done, rest) = cache.acts.split_at_mut(l + 1);
            let input = &done[l];
            let pre = &mut cache.pre[l];
            let out = &mut rest[0];
            pre.clear();
            out.clear();
            for (row, b) in weights.chunks_exact(n_in).zip(biases) {
                let z = b + row.iter().zip(input).map(|(a, b)| a * b).sum::<f64>();
                pre.push(z);
                out.push(if l + 1 < layers { silu(z) } else { z });
            }
            offset += n_in * n_out + n_out;
        }
        Ok(cache.acts[layers][0])
    }

    /// Accumulates `d_out * d(output)/d(params)` into `grad`.
    pub fn backward(&self, cache: &ForwardCache, d_out: f64, grad: &mut [f64]) {
        let layers = self.sizes.len() - 1;
        let mut offsets = Vec::with_capacity(layers);
        let mut offset = 0;
        for w in self.sizes.windows(2) {
            offsets.push(offset);
            offset += w[0] * w[1] + w[1];
        }

        // Gradient w.r.t. the current layer's pre-activation.
        let mut delta = vec![d_out];
        for l in (0..layers).rev() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let base = offsets[l];
            let input = &cache.acts[l];
            for (j, &d) in delta.iter().enumerate() {
                let row = &mut grad[base + j * n_in..base + (j + 1) * n_in];
                for (g, &x) in row.iter_mut().zip(input) {
                    *g += d * x;
                }
                grad[base + n_in * n_out + j] += d;
            }
            if l == 0 {
                break;
            }
            let weights = &self.params[base..base + n_in * n_out];
            let mut prev = vec![0.0; n_in];
            for (j, &d) in delta.iter().enumerate() {
                for (p, &w) in prev.iter_mut().zip(&weights[j * n_in..(j + 1) * n_in]) {
                    *p += d * w;
                }
            }
            for (p, &z) in prev.iter_mut().zip(&cache.pre[l - 1]) {
                *p *= silu_grad(z);
            }
            delta = prev;
        }
    }

    /// Gradient of the output with respect to every parameter.
    pub fn param_gradient(&self, x: &[f64]) -> Result<Vec<f64>, DqnError> {
        let mut cache = ForwardCache::default();
        self.forward_cached(x, &mut cache)?;
        let mut grad = vec![0.0; self.params.len()];
        self.backward(&cache, 1.0, &mut grad);
        Ok(grad)
    }
}

/// Serialized form of one dense layer; weights are row-major `outputs x inputs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerParams {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}
