use std::fs;
use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::kernels::{argmax, axpy, dot, softmax};
use crate::error::{Error, Result};

/// Elementwise activation applied after a dense layer's affine map.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Rectifier,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Rectifier => {
                if z > 0.0 {
                    z
                } else {
                    0.0
                }
            }
            Activation::Identity => z,
        }
    }

    /// Derivative at `z`. The rectifier's derivative at exactly 0 is 0.
    #[inline]
    pub fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Rectifier => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

/// A fully connected layer `post = activation(W a + b)`.
///
/// `W` is logically `n_outputs × n_inputs`. It is stored input-major
/// (one contiguous column of `W` per input unit) so that the forward pass
/// can skip inactive inputs.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseLayer {
    n_inputs: usize,
    n_outputs: usize,
    columns: Vec<f64>,
    biases: Vec<f64>,
    activation: Activation,
}

impl DenseLayer {
    /// Builds a layer from a row-major `rows × cols` weight matrix
    /// (`rows` = outputs, `cols` = inputs).
    pub fn from_row_major(
        rows: usize,
        cols: usize,
        weights: &[f64],
        biases: Vec<f64>,
        activation: Activation,
    ) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Shape(format!("layer dimensions must be positive, got {rows}x{cols}")));
        }
        if weights.len() != rows * cols {
            return Err(Error::Shape(format!(
                "weight matrix declared {rows}x{cols} but holds {} values",
                weights.len()
            )));
        }
        if biases.len() != rows {
            return Err(Error::Shape(format!(
                "layer has {rows} outputs but {} biases",
                biases.len()
            )));
        }
        if weights.iter().chain(&biases).any(|v| !v.is_finite()) {
            return Err(Error::Domain("layer parameters must be finite".into()));
        }
        let mut columns = vec![0.0; rows * cols];
        for k in 0..rows {
            for j in 0..cols {
                columns[j * rows + k] = weights[k * cols + j];
            }
        }
        Ok(Self {
            n_inputs: cols,
            n_outputs: rows,
            columns,
            biases,
            activation,
        })
    }

    /// Builds a layer from nested rows, one per output unit.
    pub fn from_rows(rows: &[Vec<f64>], biases: Vec<f64>, activation: Activation) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Shape("ragged weight rows".into()));
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        Self::from_row_major(rows.len(), cols, &flat, biases, activation)
    }

    pub(crate) fn zeros(n_inputs: usize, n_outputs: usize, activation: Activation) -> Self {
        Self {
            n_inputs,
            n_outputs,
            columns: vec![0.0; n_inputs * n_outputs],
            biases: vec![0.0; n_outputs],
            activation,
        }
    }

    pub fn n_inputs(&self) -> usize {
        self.n_inputs
    }

    pub fn n_outputs(&self) -> usize {
        self.n_outputs
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn biases(&self) -> &[f64] {
        &self.biases
    }

    /// Weight from input unit `input` to output unit `output`.
    pub fn weight(&self, output: usize, input: usize) -> f64 {
        self.columns[input * self.n_outputs + output]
    }

    /// Weights as a row-major `n_outputs × n_inputs` matrix.
    pub fn weights_row_major(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.columns.len()];
        for j in 0..self.n_inputs {
            for k in 0..self.n_outputs {
                out[k * self.n_inputs + j] = self.columns[j * self.n_outputs + k];
            }
        }
        out
    }

    /// The outgoing weights of input unit `input`, one per output unit.
    #[inline]
    pub(crate) fn column(&self, input: usize) -> &[f64] {
        &self.columns[input * self.n_outputs..(input + 1) * self.n_outputs]
    }

    pub(crate) fn columns_mut(&mut self) -> &mut [f64] {
        &mut self.columns
    }

    pub(crate) fn columns(&self) -> &[f64] {
        &self.columns
    }

    pub(crate) fn biases_mut(&mut self) -> &mut [f64] {
        &mut self.biases
    }

    /// Writes `W a + b` into `out`.
    #[inline]
    pub(crate) fn affine_into(&self, input: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend_from_slice(&self.biases);
        for (j, &a) in input.iter().enumerate() {
            if a != 0.0 {
                axpy(a, self.column(j), out);
            }
        }
    }

    /// `Wᵀ signal`, the backward map through the affine part.
    #[inline]
    pub(crate) fn transpose_apply(&self, signal: &[f64]) -> Vec<f64> {
        (0..self.n_inputs).map(|j| dot(self.column(j), signal)).collect()
    }
}

/// Pre- and post-activation values of one layer.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerTrace {
    pub pre_activation: Vec<f64>,
    pub post_activation: Vec<f64>,
}

/// Everything computed during one forward evaluation.
#[derive(Clone, Debug, PartialEq)]
pub struct ForwardTrace {
    pub input: Vec<f64>,
    pub layers: Vec<LayerTrace>,
    pub logits: Vec<f64>,
    pub probabilities: Vec<f64>,
}

impl ForwardTrace {
    /// Activation vector feeding layer `layer` (the input for layer 0).
    pub fn layer_input(&self, layer: usize) -> &[f64] {
        if layer == 0 {
            &self.input
        } else {
            &self.layers[layer - 1].post_activation
        }
    }
}

/// A dense feed-forward classifier whose final layer produces logits.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ModelFile", into = "ModelFile")]
pub struct NetworkSpec {
    layers: Vec<DenseLayer>,
}

impl NetworkSpec {
    /// Validates that layer widths chain and that the last layer is linear.
    pub fn new(layers: Vec<DenseLayer>) -> Result<Self> {
        let Some(last) = layers.last() else {
            return Err(Error::Shape("network needs at least one layer".into()));
        };
        if last.activation != Activation::Identity {
            return Err(Error::Shape("final layer must be linear (identity activation)".into()));
        }
        for (l, pair) in layers.windows(2).enumerate() {
            if pair[0].n_outputs != pair[1].n_inputs {
                return Err(Error::Shape(format!(
                    "layer {l} emits {} values but layer {} expects {}",
                    pair[0].n_outputs,
                    l + 1,
                    pair[1].n_inputs
                )));
            }
        }
        Ok(Self { layers })
    }

    /// Rectifier MLP with the given hidden widths, initialised with
    /// fan-in scaled uniform weights (`U(-√(6/fan_in), √(6/fan_in))`) and zero biases.
    pub fn init_mlp(
        n_inputs: usize,
        hidden: &[usize],
        n_classes: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        if n_inputs == 0 || n_classes == 0 || hidden.contains(&0) {
            return Err(Error::Shape("all layer widths must be positive".into()));
        }
        let mut widths = Vec::with_capacity(hidden.len() + 2);
        widths.push(n_inputs);
        widths.extend_from_slice(hidden);
        widths.push(n_classes);
        let n_layers = widths.len() - 1;
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(l, w)| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let activation = if l + 1 == n_layers {
                    Activation::Identity
                } else {
                    Activation::Rectifier
                };
                let mut layer = DenseLayer::zeros(fan_in, fan_out, activation);
                let limit = (6.0 / fan_in as f64).sqrt();
                for v in layer.columns_mut() {
                    *v = rng.random_range(-limit..limit);
                }
                layer
            })
            .collect();
        Self::new(layers)
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [DenseLayer] {
        &mut self.layers
    }

    pub fn n_inputs(&self) -> usize {
        self.layers[0].n_inputs
    }

    pub fn n_classes(&self) -> usize {
        self.layers[self.layers.len() - 1].n_outputs
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub(crate) fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.n_inputs() {
            return Err(Error::Shape(format!(
                "input has {} features, network expects {}",
                x.len(),
                self.n_inputs()
            )));
        }
        if let Some(i) = x.iter().position(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("input feature {i} is not finite")));
        }
        Ok(())
    }

    pub(crate) fn check_class(&self, class: usize) -> Result<()> {
        if class >= self.n_classes() {
            return Err(Error::ClassOutOfRange {
                class,
                n_classes: self.n_classes(),
            });
        }
        Ok(())
    }

    pub fn forward(&self, x: &[f64]) -> Result<ForwardTrace> {
        self.check_input(x)?;
        Ok(self.forward_unchecked(x))
    }

    pub(crate) fn forward_unchecked(&self, x: &[f64]) -> ForwardTrace {
        let mut layers: Vec<LayerTrace> = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let input = layers.last().map_or(x, |t| t.post_activation.as_slice());
            let mut pre = Vec::with_capacity(layer.n_outputs);
            layer.affine_into(input, &mut pre);
            let post = pre.iter().map(|&z| layer.activation.apply(z)).collect();
            layers.push(LayerTrace {
                pre_activation: pre,
                post_activation: post,
            });
        }
        let logits = layers[layers.len() - 1].post_activation.clone();
        let probabilities = softmax(&logits);
        ForwardTrace {
            input: x.to_vec(),
            layers,
            logits,
            probabilities,
        }
    }

    pub fn logits(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let mut scratch = Scratch::default();
        Ok(self.logits_with(x, &mut scratch).to_vec())
    }

    /// Logits without input validation, reusing `scratch` buffers.
    pub(crate) fn logits_with<'s>(&self, x: &[f64], scratch: &'s mut Scratch) -> &'s [f64] {
        let Scratch { a, b } = scratch;
        self.layers[0].affine_into(x, a);
        for l in 1..self.layers.len() {
            // `a` holds the previous pre-activation; activate in place.
            let act = self.layers[l - 1].activation;
            for v in a.iter_mut() {
                *v = act.apply(*v);
            }
            self.layers[l].affine_into(a, b);
            std::mem::swap(a, b);
        }
        a
    }

    /// Predicted label (ties toward the lowest index) and class probabilities.
    pub fn predict(&self, x: &[f64]) -> Result<(usize, Vec<f64>)> {
        let logits = self.logits(x)?;
        let probabilities = softmax(&logits);
        Ok((argmax(&probabilities), probabilities))
    }

    /// Reverse pass from `output_signal` (w.r.t. the logits) down to the input.
    ///
    /// Identity layers pass the signal through unchanged. At every rectifier
    /// unit, `gate(layer, unit, signal)` decides the signal that crosses it.
    pub(crate) fn backpropagate<F>(&self, output_signal: Vec<f64>, mut gate: F) -> Vec<f64>
    where
        F: FnMut(usize, usize, f64) -> f64,
    {
        let mut signal = output_signal;
        for (l, layer) in self.layers.iter().enumerate().rev() {
            if layer.activation == Activation::Rectifier {
                for (k, s) in signal.iter_mut().enumerate() {
                    *s = gate(l, k, *s);
                }
            }
            signal = layer.transpose_apply(&signal);
        }
        signal
    }

    /// ∂ logit_class / ∂ x by reverse accumulation through the recorded trace.
    pub fn input_gradient(&self, x: &[f64], class: usize) -> Result<Vec<f64>> {
        self.check_class(class)?;
        let trace = self.forward(x)?;
        Ok(self.gradient_from_trace(&trace, class))
    }

    pub(crate) fn gradient_from_trace(&self, trace: &ForwardTrace, class: usize) -> Vec<f64> {
        let mut seed = vec![0.0; self.n_classes()];
        seed[class] = 1.0;
        self.backpropagate(seed, |l, k, s| {
            s * Activation::Rectifier.derivative(trace.layers[l].pre_activation[k])
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()? + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

/// Reusable buffers for repeated logit evaluations.
#[derive(Debug, Default)]
pub(crate) struct Scratch {
    a: Vec<f64>,
    b: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    n_inputs: usize,
    n_classes: usize,
    layers: Vec<LayerFile>,
}

#[derive(Serialize, Deserialize)]
struct LayerFile {
    rows: usize,
    cols: usize,
    weights: Vec<f64>,
    biases: Vec<f64>,
    activation: Activation,
}

impl TryFrom<ModelFile> for NetworkSpec {
    type Error = Error;

    fn try_from(file: ModelFile) -> Result<Self> {
        let layers = file
            .layers
            .into_iter()
            .map(|l| DenseLayer::from_row_major(l.rows, l.cols, &l.weights, l.biases, l.activation))
            .collect::<Result<Vec<_>>>()?;
        let net = NetworkSpec::new(layers)?;
        if net.n_inputs() != file.n_inputs || net.n_classes() != file.n_classes {
            return Err(Error::Shape(format!(
                "model header declares {}→{} but layers give {}→{}",
                file.n_inputs,
                file.n_classes,
                net.n_inputs(),
                net.n_classes()
            )));
        }
        Ok(net)
    }
}

impl From<NetworkSpec> for ModelFile {
    fn from(net: NetworkSpec) -> Self {
        ModelFile {
            n_inputs: net.n_inputs(),
            n_classes: net.n_classes(),
            layers: net
                .layers
                .iter()
                .map(|l| LayerFile {
                    rows: l.n_outputs,
                    cols: l.n_inputs,
                    weights: l.weights_row_major(),
                    biases: l.biases.clone(),
                    activation: l.activation,
                })
                .collect(),
        }
    }
}
