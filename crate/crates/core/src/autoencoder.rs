//! Dense reconstruction autoencoder with hand-written backpropagation and Adam.
//!
//! Hidden layers use `tanh`; the output layer is linear. Weight matrices are
//! stored row-major as `out x in`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::timeseries::Window;

/// One affine layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl Dense {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            biases: vec![0.0; outputs],
        }
    }

    fn apply(&self, input: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(
            self.weights
                .chunks_exact(self.inputs)
                .zip(&self.biases)
                .map(|(row, b)| row.iter().zip(input).map(|(w, x)| w * x).sum::<f64>() + b),
        );
    }
}

/// Encoder/decoder stack. The middle entry of `layer_sizes` is the latent size.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseAutoencoder {
    layers: Vec<Dense>,
}

/// Gradients with the same layout as the model parameters.
pub type Gradients = DenseAutoencoder;

/// Default hidden layout `[64, 16, 64]` between input and output.
pub fn default_layer_sizes(input: usize) -> Vec<usize> {
    vec![input, 64, 16, 64, input]
}

fn validate_sizes(sizes: &[usize]) -> Result<()> {
    if sizes.len() < 2 || sizes.contains(&0) || sizes.first() != sizes.last() {
        return Err(Error::InvalidLayerSizes(sizes.to_vec()));
    }
    Ok(())
}

impl DenseAutoencoder {
    /// Glorot-uniform weights, zero biases; fully determined by `seed`.
    pub fn init(layer_sizes: &[usize], seed: u64) -> Result<Self> {
        validate_sizes(layer_sizes)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = layer_sizes
            .windows(2)
            .map(|pair| {
                let (fan_in, fan_out) = (pair[0], pair[1]);
                let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let mut layer = Dense::zeros(fan_in, fan_out);
                layer
                    .weights
                    .iter_mut()
                    .for_each(|w| *w = rng.random_range(-bound..=bound));
                layer
            })
            .collect();
        Ok(Self { layers })
    }

    /// All-zero parameters with the given layout.
    pub fn zeros(layer_sizes: &[usize]) -> Result<Self> {
        validate_sizes(layer_sizes)?;
        Ok(Self {
            layers: layer_sizes
                .windows(2)
                .map(|p| Dense::zeros(p[0], p[1]))
                .collect(),
        })
    }

    /// Builds a model from explicit layers, checking that dimensions chain.
    pub fn from_layers(layers: Vec<Dense>) -> Result<Self> {
        let mut sizes: Vec<usize> = layers.iter().map(|l| l.inputs).collect();
        if let Some(last) = layers.last() {
            sizes.push(last.outputs);
        }
        validate_sizes(&sizes)?;
        for pair in layers.windows(2) {
            if pair[0].outputs != pair[1].inputs {
                return Err(Error::InvalidLayerSizes(sizes));
            }
        }
        for l in &layers {
            if l.weights.len() != l.inputs * l.outputs || l.biases.len() != l.outputs {
                return Err(Error::InvalidLayerSizes(sizes));
            }
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut sizes: Vec<usize> = self.layers.iter().map(|l| l.inputs).collect();
        sizes.push(self.output_size());
        sizes
    }

    pub fn input_size(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_size(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs
    }

    pub fn parameter_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.biases.len())
            .sum()
    }

    /// Parameters in checkpoint order: per layer, weights row-major then biases.
    pub fn parameters(&self) -> impl Iterator<Item = &f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.biases.iter()))
    }

    pub fn parameters_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weights.iter_mut().chain(l.biases.iter_mut()))
    }

    pub fn is_finite(&self) -> bool {
        self.parameters().all(|p| p.is_finite())
    }

    fn check_input(&self, window: &Window) -> Result<()> {
        if window.data().len() != self.input_size() {
            return Err(Error::InputSizeMismatch {
                expected: self.input_size(),
                found: window.data().len(),
            });
        }
        Ok(())
    }

    /// Activations of every layer, input first. Hidden entries are post-tanh.
    fn activations(&self, input: &[f64]) -> Vec<Vec<f64>> {
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(input.to_vec());
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let mut out = Vec::with_capacity(layer.outputs);
            layer.apply(&acts[i], &mut out);
            if i != last {
                out.iter_mut().for_each(|v| *v = v.tanh());
            }
            acts.push(out);
        }
        acts
    }

    /// Reconstructs `window`; the result keeps its shape and offset.
    pub fn forward(&self, window: &Window) -> Result<Window> {
        self.check_input(window)?;
        let mut acts = self.activations(window.data());
        window.with_data(acts.pop().unwrap_or_default())
    }

    /// Reconstruction together with parameter gradients of a loss whose
    /// gradient with respect to the reconstruction is produced by `loss_grad`.
    pub fn forward_backward<F>(&self, window: &Window, loss_grad: F) -> Result<(Window, Gradients)>
    where
        F: FnOnce(&Window) -> Result<Vec<f64>>,
    {
        self.check_input(window)?;
        let acts = self.activations(window.data());
        let rec = window.with_data(acts[acts.len() - 1].clone())?;
        let upstream = loss_grad(&rec)?;
        let mut grads = self.zeroed();
        self.backward_into(&acts, &upstream, &mut grads)?;
        Ok((rec, grads))
    }

    /// Like [`Self::forward_backward`], but adds the parameter gradients into
    /// `acc` instead of allocating a fresh tensor.
    pub fn accumulate_gradients<F>(
        &self,
        window: &Window,
        loss_grad: F,
        acc: &mut Gradients,
    ) -> Result<Window>
    where
        F: FnOnce(&Window) -> Result<Vec<f64>>,
    {
        self.check_input(window)?;
        self.check_layout(acc)?;
        let acts = self.activations(window.data());
        let rec = window.with_data(acts[acts.len() - 1].clone())?;
        let upstream = loss_grad(&rec)?;
        self.backward_into(&acts, &upstream, acc)?;
        Ok(rec)
    }

    /// Parameter gradients for a given upstream gradient on the reconstruction.
    pub fn parameter_gradients(&self, window: &Window, upstream: &[f64]) -> Result<Gradients> {
        self.check_input(window)?;
        let acts = self.activations(window.data());
        let mut grads = self.zeroed();
        self.backward_into(&acts, upstream, &mut grads)?;
        Ok(grads)
    }

    /// Adds the parameter gradients for `upstream` into `grads`.
    fn backward_into(
        &self,
        acts: &[Vec<f64>],
        upstream: &[f64],
        grads: &mut Gradients,
    ) -> Result<()> {
        if upstream.len() != self.output_size() {
            return Err(Error::LengthMismatch {
                left: self.output_size(),
                right: upstream.len(),
            });
        }
        // delta holds dL/dz for the current layer's pre-activation
        let mut delta = upstream.to_vec();
        for i in (0..self.layers.len()).rev() {
            let layer = &self.layers[i];
            let input = &acts[i];
            let g = &mut grads.layers[i];
            for (o, &dz) in delta.iter().enumerate() {
                g.biases[o] += dz;
                let row = &mut g.weights[o * layer.inputs..(o + 1) * layer.inputs];
                for (w, x) in row.iter_mut().zip(input) {
                    *w += dz * x;
                }
            }
            if i == 0 {
                break;
            }
            let mut prev = vec![0.0; layer.inputs];
            for (row, &dz) in layer.weights.chunks_exact(layer.inputs).zip(&delta) {
                for (p, w) in prev.iter_mut().zip(row) {
                    *p += w * dz;
                }
            }
            // input to layer i is tanh output a; d tanh = 1 - a^2
            for (p, a) in prev.iter_mut().zip(input) {
                *p *= 1.0 - a * a;
            }
            delta = prev;
        }
        Ok(())
    }

    /// Zero tensor with this model's layout.
    pub fn zeroed(&self) -> Gradients {
        Self {
            layers: self
                .layers
                .iter()
                .map(|l| Dense::zeros(l.inputs, l.outputs))
                .collect(),
        }
    }

    /// `self += scale * other`, layouts must agree.
    pub fn add_scaled(&mut self, other: &Gradients, scale: f64) -> Result<()> {
        self.check_layout(other)?;
        for (l, o) in self.layers.iter_mut().zip(&other.layers) {
            for (p, g) in l.weights.iter_mut().zip(&o.weights) {
                *p += scale * g;
            }
            for (p, g) in l.biases.iter_mut().zip(&o.biases) {
                *p += scale * g;
            }
        }
        Ok(())
    }

    pub fn scale(&mut self, factor: f64) {
        for l in &mut self.layers {
            l.weights
                .iter_mut()
                .chain(&mut l.biases)
                .for_each(|p| *p *= factor);
        }
    }

    fn check_layout(&self, other: &Self) -> Result<()> {
        if self.layer_sizes() != other.layer_sizes() {
            return Err(Error::InvalidArgument(format!(
                "parameter layout {:?} does not match {:?}",
                other.layer_sizes(),
                self.layer_sizes()
            )));
        }
        Ok(())
    }
}

/// Adam hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Moment estimates for every parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub step: u64,
    first: Vec<f64>,
    second: Vec<f64>,
}

impl AdamState {
    pub fn new(model: &DenseAutoencoder, config: AdamConfig) -> Self {
        let n = model.parameter_count();
        Self {
            config,
            step: 0,
            first: vec![0.0; n],
            second: vec![0.0; n],
        }
    }

    /// One bias-corrected Adam update of `model` in place.
    pub fn step(&mut self, model: &mut DenseAutoencoder, grads: &Gradients) -> Result<()> {
        model.check_layout(grads)?;
        if self.first.len() != model.parameter_count() {
            return Err(Error::InvalidArgument(
                "optimizer state does not match model".into(),
            ));
        }
        if !grads.is_finite() {
            return Err(Error::NonFinite {
                what: "gradient".into(),
            });
        }
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        self.step += 1;
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);
        for (((p, g), m), v) in model
            .parameters_mut()
            .zip(grads.parameters())
            .zip(self.first.iter_mut())
            .zip(self.second.iter_mut())
        {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
        }
        if !model.is_finite() {
            return Err(Error::NonFinite {
                what: "model parameter".into(),
            });
        }
        Ok(())
    }
}
