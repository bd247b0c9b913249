use alloc::vec::Vec;

use super::exec::{Executor, Sequential};
use super::layer::{backward_sample, forward_sample, LayerSpec, Params};
use super::{Dims, NnError, Tensor4};
use crate::rng::Rng;

/// An ordered layer stack with its parameters.
///
/// Shapes are validated once at construction; parameter initialisation is a
/// pure function of `rng_seed` (fan-in scaled uniform, bound `sqrt(1/fan_in)`,
/// weights then bias, layer by layer).
#[derive(Debug, Clone, PartialEq)]
pub struct ModelGraph {
    input_dims: Dims,
    layers: Vec<LayerSpec>,
    params: Vec<Option<Params>>,
    dims: Vec<Dims>,
    rng_seed: u64,
}

/// Every intermediate activation of a batch forward pass.
/// `activations[0]` is the input, `activations[i + 1]` the output of layer `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardCache {
    pub activations: Vec<Tensor4>,
}

/// Parameter gradients, one slot per layer (empty for parameter-free layers).
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Option<Params>>,
}

impl Gradients {
    pub fn zeros_like(model: &ModelGraph) -> Self {
        let layers = model
            .layers
            .iter()
            .map(|l| l.param_sizes().map(|(w, b)| Params::zeros(w, b)))
            .collect();
        Self { layers }
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            if let (Some(a), Some(b)) = (a, b) {
                a.add_assign(b);
            }
        }
    }

    pub fn values(&self) -> impl Iterator<Item = &f32> {
        self.layers.iter().flatten().flat_map(|p| p.values())
    }

    pub fn is_zero(&self) -> bool {
        self.values().all(|&v| v == 0.0)
    }
}

fn check_shapes(input_dims: Dims, layers: &[LayerSpec]) -> Result<Vec<Dims>, NnError> {
    let mut dims = Vec::with_capacity(layers.len());
    let mut cur = input_dims;
    for (i, l) in layers.iter().enumerate() {
        cur = l.output_dims(cur).map_err(|reason| NnError::IncompatibleLayer {
            layer: i,
            kind: l.name(),
            input: cur,
            reason,
        })?;
        dims.push(cur);
    }
    Ok(dims)
}

impl ModelGraph {
    pub fn new(input_dims: Dims, layers: Vec<LayerSpec>, rng_seed: u64) -> Result<Self, NnError> {
        let dims = check_shapes(input_dims, &layers)?;
        let mut rng = Rng::new(rng_seed);
        let params = layers
            .iter()
            .map(|l| {
                l.param_sizes().map(|(nw, nb)| {
                    let bound = libm::sqrtf(1.0 / l.fan_in() as f32);
                    let mut p = Params::zeros(nw, nb);
                    for v in p.values_mut() {
                        *v = rng.uniform(-bound, bound);
                    }
                    p
                })
            })
            .collect();
        Ok(Self { input_dims, layers, params, dims, rng_seed })
    }

    /// Rebuilds a model from stored parameters (e.g. a checkpoint).
    pub fn from_parameters(
        input_dims: Dims,
        layers: Vec<LayerSpec>,
        params: Vec<Option<Params>>,
        rng_seed: u64,
    ) -> Result<Self, NnError> {
        let dims = check_shapes(input_dims, &layers)?;
        if params.len() != layers.len() {
            return Err(NnError::ParameterShape { layer: params.len().min(layers.len()) });
        }
        for (i, (l, p)) in layers.iter().zip(&params).enumerate() {
            let ok = match (l.param_sizes(), p) {
                (None, None) => true,
                (Some((nw, nb)), Some(p)) => p.weight.len() == nw && p.bias.len() == nb,
                _ => false,
            };
            if !ok {
                return Err(NnError::ParameterShape { layer: i });
            }
        }
        Ok(Self { input_dims, layers, params, dims, rng_seed })
    }

    pub fn input_dims(&self) -> Dims {
        self.input_dims
    }

    pub fn output_dims(&self) -> Dims {
        self.dims.last().copied().unwrap_or(self.input_dims)
    }

    /// Output dims of layer `i`.
    pub fn layer_dims(&self, i: usize) -> Dims {
        self.dims[i]
    }

    /// Input dims of layer `i`.
    pub fn layer_input_dims(&self, i: usize) -> Dims {
        if i == 0 { self.input_dims } else { self.dims[i - 1] }
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn params(&self) -> &[Option<Params>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Option<Params>] {
        &mut self.params
    }

    pub fn rng_seed(&self) -> u64 {
        self.rng_seed
    }

    pub fn parameter_count(&self) -> usize {
        self.params.iter().flatten().map(Params::len).sum()
    }

    /// Number of leading layers that produce logits, i.e. everything except a
    /// trailing softmax.
    pub fn logits_end(&self) -> usize {
        match self.layers.last() {
            Some(LayerSpec::Softmax) => self.layers.len() - 1,
            _ => self.layers.len(),
        }
    }

    fn check_range(&self, start: usize, end: usize) -> Result<(), NnError> {
        if start > end || end > self.layers.len() {
            return Err(NnError::LayerRange { start, end });
        }
        Ok(())
    }

    /// Runs layers `start..end` on one sample, returning the input followed by
    /// every layer output.
    pub(crate) fn forward_sample_range(&self, start: usize, end: usize, x: &[f32]) -> Vec<Vec<f32>> {
        let mut acts = Vec::with_capacity(end - start + 1);
        acts.push(x.to_vec());
        for i in start..end {
            let out = forward_sample(&self.layers[i], self.params[i].as_ref(), self.layer_input_dims(i), &acts[acts.len() - 1]);
            acts.push(out);
        }
        acts
    }

    /// Backpropagates through layers `start..start + acts.len() - 1` for one
    /// sample. Returns per-sample parameter gradients and the input gradient.
    pub(crate) fn backward_sample_range(&self, start: usize, acts: &[Vec<f32>], grad_out: Vec<f32>) -> (Gradients, Vec<f32>) {
        let mut grads = Gradients::zeros_like(self);
        let mut g = grad_out;
        for j in (0..acts.len() - 1).rev() {
            let i = start + j;
            g = backward_sample(
                &self.layers[i],
                self.params[i].as_ref(),
                self.layer_input_dims(i),
                &acts[j],
                &acts[j + 1],
                &g,
                grads.layers[i].as_mut(),
            );
        }
        (grads, g)
    }

    fn check_input(&self, start: usize, input: &Tensor4) -> Result<(), NnError> {
        let expected = self.layer_input_dims(start);
        if input.dims() != expected {
            return Err(NnError::InputShape { expected, found: input.dims() });
        }
        Ok(())
    }

    /// Full forward pass with cached activations.
    pub fn forward(&self, input: &Tensor4) -> Result<(Tensor4, ForwardCache), NnError> {
        self.forward_with(&Sequential, input)
    }

    pub fn forward_with<E: Executor>(&self, exec: &E, input: &Tensor4) -> Result<(Tensor4, ForwardCache), NnError> {
        self.check_input(0, input)?;
        let n = input.n();
        let per_sample = exec.map(n, |s| self.forward_sample_range(0, self.layers.len(), input.sample(s)));
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(input.clone());
        for i in 0..self.layers.len() {
            let d = self.dims[i];
            let t = Tensor4::from_samples(d, per_sample.iter().map(|a| &a[i + 1]))?;
            activations.push(t);
        }
        let out = activations.last().cloned().unwrap_or_else(|| input.clone());
        Ok((out, ForwardCache { activations }))
    }

    /// Forward through layers `start..end` only, without caching.
    pub fn forward_range(&self, start: usize, end: usize, input: &Tensor4) -> Result<Tensor4, NnError> {
        self.forward_range_with(&Sequential, start, end, input)
    }

    pub fn forward_range_with<E: Executor>(
        &self,
        exec: &E,
        start: usize,
        end: usize,
        input: &Tensor4,
    ) -> Result<Tensor4, NnError> {
        self.check_range(start, end)?;
        self.check_input(start, input)?;
        let out_dims = if end == start { input.dims() } else { self.dims[end - 1] };
        let outs = exec.map(input.n(), |s| {
            let mut acts = self.forward_sample_range(start, end, input.sample(s));
            acts.pop().unwrap_or_default()
        });
        Tensor4::from_samples(out_dims, outs)
    }

    /// Batch backward pass: per-sample gradients summed in sample order.
    pub fn backward(&self, cache: &ForwardCache, upstream: &Tensor4) -> Result<Gradients, NnError> {
        self.backward_with(&Sequential, cache, upstream).map(|(g, _)| g)
    }

    /// As [`backward`](Self::backward), also returning the input gradient.
    pub fn backward_with<E: Executor>(
        &self,
        exec: &E,
        cache: &ForwardCache,
        upstream: &Tensor4,
    ) -> Result<(Gradients, Tensor4), NnError> {
        if cache.activations.len() != self.layers.len() + 1 {
            return Err(NnError::StaleCache { layer: cache.activations.len().saturating_sub(1) });
        }
        let n = cache.activations[0].n();
        for (i, a) in cache.activations.iter().enumerate() {
            let expected = if i == 0 { self.input_dims } else { self.dims[i - 1] };
            if a.dims() != expected || a.n() != n {
                return Err(NnError::StaleCache { layer: i.saturating_sub(1) });
            }
        }
        let out = &cache.activations[self.layers.len()];
        if upstream.shape() != out.shape() {
            return Err(NnError::UpstreamShape { expected: out.shape(), found: upstream.shape() });
        }
        let per_sample = exec.map(n, |s| {
            let acts: Vec<Vec<f32>> = cache.activations.iter().map(|a| a.sample(s).to_vec()).collect();
            self.backward_sample_range(0, &acts, upstream.sample(s).to_vec())
        });
        let mut total = Gradients::zeros_like(self);
        let mut input_grads = Vec::with_capacity(n);
        for (g, gi) in per_sample {
            total.add_assign(&g);
            input_grads.push(gi);
        }
        Ok((total, Tensor4::from_samples(self.input_dims, input_grads)?))
    }
}
