//! Small fully connected network with hand-written backpropagation.
//!
//! Hidden layers use ReLU; the output layer is sigmoid or identity. Batches
//! are rows of a matrix, so one forward call evaluates a whole mini-batch.

use std::sync::atomic::{AtomicU64, Ordering};

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::NnError;

static NEXT_NET_ID: AtomicU64 = AtomicU64::new(1);

fn fresh_id() -> u64 {
    NEXT_NET_ID.fetch_add(1, Ordering::Relaxed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputActivation {
    Sigmoid,
    Identity,
}

impl OutputActivation {
    fn apply(self, z: f64) -> f64 {
        match self {
            OutputActivation::Sigmoid => sigmoid(z),
            OutputActivation::Identity => z,
        }
    }

    /// Derivative expressed through the activation value `a`.
    fn derivative(self, a: f64) -> f64 {
        match self {
            OutputActivation::Sigmoid => a * (1.0 - a),
            OutputActivation::Identity => 1.0,
        }
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// One affine layer, `W` stored as `out × in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weights: Array2<f64>,
    pub biases: Array1<f64>,
}

/// Feedforward network: affine layers, ReLU between them.
#[derive(Debug)]
pub struct Mlp {
    layer_sizes: Vec<usize>,
    layers: Vec<Layer>,
    output: OutputActivation,
    id: u64,
    version: u64,
}

impl Clone for Mlp {
    /// A clone is a separate network: tapes from one do not fit the other.
    fn clone(&self) -> Self {
        Self {
            layer_sizes: self.layer_sizes.clone(),
            layers: self.layers.clone(),
            output: self.output,
            id: fresh_id(),
            version: 0,
        }
    }
}

impl PartialEq for Mlp {
    fn eq(&self, other: &Self) -> bool {
        self.layer_sizes == other.layer_sizes
            && self.output == other.output
            && self.layers == other.layers
    }
}

/// Cached activations of one forward pass over a batch.
///
/// Consumed by [`Mlp::backward`]; it only fits the network and parameter
/// version that produced it.
#[derive(Debug)]
pub struct GradientTape {
    net_id: u64,
    version: u64,
    /// Inputs to each layer; `activations[0]` is the network input.
    activations: Vec<Array2<f64>>,
    /// Pre-activations of each layer.
    pre_activations: Vec<Array2<f64>>,
    /// Network output (post-activation).
    output: Array2<f64>,
}

/// Parameter gradients laid out like the network's layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Layer>,
}

impl Gradients {
    pub fn max_abs(&self) -> f64 {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.biases.iter()))
            .fold(0.0, |m, &g| m.max(g.abs()))
    }
}

impl Mlp {
    /// Glorot-uniform weights, zero biases.
    pub fn new<R: Rng + ?Sized>(
        layer_sizes: &[usize],
        output: OutputActivation,
        rng: &mut R,
    ) -> Result<Self, NnError> {
        check_topology(layer_sizes)?;
        let layers = layer_sizes
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let weights =
                    Array2::from_shape_simple_fn((fan_out, fan_in), || rng.random_range(-limit..=limit));
                Layer {
                    weights,
                    biases: Array1::zeros(fan_out),
                }
            })
            .collect();
        Ok(Self::assemble(layer_sizes.to_vec(), layers, output))
    }

    /// All parameters zero.
    pub fn zeros(layer_sizes: &[usize], output: OutputActivation) -> Result<Self, NnError> {
        check_topology(layer_sizes)?;
        let layers = layer_sizes
            .windows(2)
            .map(|w| Layer {
                weights: Array2::zeros((w[1], w[0])),
                biases: Array1::zeros(w[1]),
            })
            .collect();
        Ok(Self::assemble(layer_sizes.to_vec(), layers, output))
    }

    /// Builds a network from explicit layers; `sizes[0]` is the input width.
    pub fn from_layers(
        input_size: usize,
        layers: Vec<Layer>,
        output: OutputActivation,
    ) -> Result<Self, NnError> {
        let mut sizes = vec![input_size];
        for l in &layers {
            let (out, inp) = l.weights.dim();
            if inp != *sizes.last().unwrap() || l.biases.len() != out {
                return Err(NnError::BadTopology);
            }
            sizes.push(out);
        }
        check_topology(&sizes)?;
        Ok(Self::assemble(sizes, layers, output))
    }

    fn assemble(layer_sizes: Vec<usize>, layers: Vec<Layer>, output: OutputActivation) -> Self {
        Self {
            layer_sizes,
            layers,
            output,
            id: fresh_id(),
            version: 0,
        }
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn output_activation(&self) -> OutputActivation {
        self.output
    }

    pub fn input_size(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_size(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.biases.len())
            .sum()
    }

    /// Copies parameters from `other`, which must share the topology.
    pub fn copy_params_from(&mut self, other: &Mlp) {
        assert_eq!(self.layer_sizes, other.layer_sizes, "topology mismatch");
        self.layers.clone_from(&other.layers);
        self.version += 1;
    }

    pub fn all_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(l.biases.iter()).all(|v| v.is_finite()))
    }

    /// Forward pass for a single input.
    pub fn forward(&self, input: &[f64]) -> Result<(Vec<f64>, GradientTape), NnError> {
        let x = ArrayView2::from_shape((1, input.len()), input).expect("row view");
        let (out, tape) = self.forward_batch(x)?;
        Ok((out.row(0).to_vec(), tape))
    }

    /// Forward pass without keeping a tape.
    pub fn predict(&self, input: &[f64]) -> Result<Vec<f64>, NnError> {
        let x = ArrayView2::from_shape((1, input.len()), input).expect("row view");
        Ok(self.predict_batch(x)?.row(0).to_vec())
    }

    /// Forward pass over the rows of `inputs` without keeping a tape.
    pub fn predict_batch(&self, inputs: ArrayView2<f64>) -> Result<Array2<f64>, NnError> {
        self.check_input(inputs.ncols())?;
        let mut a = inputs.to_owned();
        let last = self.layers.len();
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = a.dot(&layer.weights.t());
            z += &layer.biases;
            if i + 1 == last {
                z.mapv_inplace(|v| self.output.apply(v));
            } else {
                z.mapv_inplace(|v| v.max(0.0));
            }
            a = z;
        }
        Ok(a)
    }

    /// Forward pass over the rows of `inputs`, recording a tape.
    pub fn forward_batch(
        &self,
        inputs: ArrayView2<f64>,
    ) -> Result<(Array2<f64>, GradientTape), NnError> {
        self.check_input(inputs.ncols())?;
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        let mut pre_activations = Vec::with_capacity(self.layers.len());
        let mut a = inputs.to_owned();
        let last = self.layers.len();
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = a.dot(&layer.weights.t());
            z += &layer.biases;
            let next = if i + 1 == last {
                z.mapv(|v| self.output.apply(v))
            } else {
                z.mapv(|v| v.max(0.0))
            };
            activations.push(a);
            pre_activations.push(z);
            a = next;
        }
        if self.layers.is_empty() {
            activations.push(a.clone());
        }
        let tape = GradientTape {
            net_id: self.id,
            version: self.version,
            activations,
            pre_activations,
            output: a.clone(),
        };
        Ok((a, tape))
    }

    /// Reverse-mode gradients of a loss whose gradient with respect to the
    /// network output is `output_grad` (one row per batch entry).
    pub fn backward_batch(
        &self,
        tape: GradientTape,
        output_grad: ArrayView2<f64>,
    ) -> Result<Gradients, NnError> {
        if tape.net_id != self.id || tape.version != self.version {
            return Err(NnError::StaleTape);
        }
        if output_grad.dim() != tape.output.dim() {
            return Err(NnError::OutputGradSize {
                expected: tape.output.ncols(),
                got: output_grad.ncols(),
            });
        }
        let n = self.layers.len();
        let mut grads: Vec<Layer> = Vec::with_capacity(n);
        if n == 0 {
            return Ok(Gradients { layers: grads });
        }
        let output = self.output;
        let mut delta = &output_grad * &tape.output.mapv(|a| output.derivative(a));
        for i in (0..n).rev() {
            let a_prev = &tape.activations[i];
            let dw = delta.t().dot(a_prev);
            let db = delta.sum_axis(Axis(0));
            grads.push(Layer {
                weights: dw,
                biases: db,
            });
            if i > 0 {
                let mut upstream = delta.dot(&self.layers[i].weights);
                let z = &tape.pre_activations[i - 1];
                ndarray::Zip::from(&mut upstream)
                    .and(z)
                    .for_each(|g, &z| {
                        if z <= 0.0 {
                            *g = 0.0;
                        }
                    });
                delta = upstream;
            }
        }
        grads.reverse();
        Ok(Gradients { layers: grads })
    }

    /// Single-input backward pass.
    pub fn backward(&self, tape: GradientTape, output_grad: &[f64]) -> Result<Gradients, NnError> {
        if output_grad.len() != self.output_size() {
            return Err(NnError::OutputGradSize {
                expected: self.output_size(),
                got: output_grad.len(),
            });
        }
        let g = ArrayView2::from_shape((1, output_grad.len()), output_grad).expect("row view");
        self.backward_batch(tape, g)
    }

    /// `θ ← θ − lr·∇θ`. Rejects mismatched or non-finite gradients without
    /// touching the parameters.
    pub fn sgd_step(&mut self, grads: &Gradients, learning_rate: f64) -> Result<(), NnError> {
        if grads.layers.len() != self.layers.len()
            || grads.layers.iter().zip(&self.layers).any(|(g, l)| {
                g.weights.dim() != l.weights.dim() || g.biases.len() != l.biases.len()
            })
        {
            return Err(NnError::GradientShape);
        }
        let finite = grads
            .layers
            .iter()
            .all(|g| g.weights.iter().chain(g.biases.iter()).all(|v| v.is_finite()));
        if !finite {
            return Err(NnError::NonFiniteGradient);
        }
        for (layer, g) in self.layers.iter_mut().zip(&grads.layers) {
            layer.weights.scaled_add(-learning_rate, &g.weights);
            layer.biases.scaled_add(-learning_rate, &g.biases);
        }
        self.version += 1;
        Ok(())
    }

    /// Smallest |pre-activation| over all hidden units for `input`. Finite
    /// differences are only trustworthy when this is well away from zero.
    pub fn min_hidden_margin(&self, input: &[f64]) -> Result<f64, NnError> {
        let (_, tape) = self.forward(input)?;
        let hidden = tape.pre_activations.len().saturating_sub(1);
        Ok(tape.pre_activations[..hidden]
            .iter()
            .flat_map(|z| z.iter())
            .fold(f64::INFINITY, |m, &z| m.min(z.abs())))
    }

    fn check_input(&self, got: usize) -> Result<(), NnError> {
        if got != self.input_size() {
            return Err(NnError::InputSize {
                expected: self.input_size(),
                got,
            });
        }
        Ok(())
    }

    /// Serializable snapshot of topology and parameters.
    pub fn to_params(&self) -> MlpParams {
        let mut params = Vec::with_capacity(self.num_params());
        for l in &self.layers {
            params.extend(l.weights.iter());
            params.extend(l.biases.iter());
        }
        MlpParams {
            layer_sizes: self.layer_sizes.clone(),
            output_activation: self.output,
            params,
        }
    }

    pub fn from_params(p: &MlpParams) -> Result<Self, NnError> {
        check_topology(&p.layer_sizes).map_err(|_| NnError::Format("bad layer sizes".into()))?;
        let expected: usize = p.layer_sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
        if p.params.len() != expected {
            return Err(NnError::Format(format!(
                "expected {expected} parameters, found {}",
                p.params.len()
            )));
        }
        let mut rest = p.params.as_slice();
        let mut layers = Vec::new();
        for w in p.layer_sizes.windows(2) {
            let (inp, out) = (w[0], w[1]);
            let (wv, tail) = rest.split_at(inp * out);
            let (bv, tail) = tail.split_at(out);
            rest = tail;
            layers.push(Layer {
                weights: Array2::from_shape_vec((out, inp), wv.to_vec()).expect("sized"),
                biases: Array1::from(bv.to_vec()),
            });
        }
        Ok(Self::assemble(p.layer_sizes.clone(), layers, p.output_activation))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.to_params()).expect("parameters serialize")
    }

    pub fn from_json(s: &str) -> Result<Self, NnError> {
        let p: MlpParams = serde_json::from_str(s).map_err(|e| NnError::Format(e.to_string()))?;
        Self::from_params(&p)
    }
}

/// On-disk parameter layout.
///
/// `params` holds, for each layer in order, the weight matrix in row-major
/// `out × in` order followed by the bias vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub layer_sizes: Vec<usize>,
    pub output_activation: OutputActivation,
    pub params: Vec<f64>,
}

fn check_topology(sizes: &[usize]) -> Result<(), NnError> {
    if sizes.is_empty() || sizes.iter().any(|&s| s == 0) {
        return Err(NnError::BadTopology);
    }
    Ok(())
}

/// Largest relative error between `backward` and central differences with
/// step `h` over every parameter. `loss` maps the network output to the loss
/// value and its gradient with respect to that output.
///
/// Relative error is `|a − n| / max(|a|, |n|, 1e-8)`, so entries where both
/// values are essentially zero are compared absolutely.
pub fn grad_check<L>(net: &Mlp, input: &[f64], loss: L, h: f64) -> Result<f64, NnError>
where
    L: Fn(&[f64]) -> (f64, Vec<f64>),
{
    let (out, tape) = net.forward(input)?;
    let (_, dl) = loss(&out);
    let grads = net.backward(tape, &dl)?;

    let eval = |n: &Mlp| -> Result<f64, NnError> { Ok(loss(&n.predict(input)?).0) };
    let mut probe = net.clone();
    let mut worst: f64 = 0.0;
    for (li, layer_grads) in grads.layers.iter().enumerate() {
        let weights = layer_grads.weights.iter();
        let biases = layer_grads.biases.iter();
        let slots = weights
            .map(|&g| (false, g))
            .enumerate()
            .chain(biases.map(|&g| (true, g)).enumerate());
        for (idx, (is_bias, analytic)) in slots {
            let numeric = central_difference(&mut probe, h, &eval, ParamRef { li, is_bias, idx })?;
            worst = worst.max(relative_error(analytic, numeric));
        }
    }
    Ok(worst)
}

#[derive(Clone, Copy)]
struct ParamRef {
    li: usize,
    is_bias: bool,
    idx: usize,
}

fn param_mut(net: &mut Mlp, p: ParamRef) -> &mut f64 {
    let layer = &mut net.layers[p.li];
    if p.is_bias {
        &mut layer.biases[p.idx]
    } else {
        &mut layer.weights.as_slice_mut().expect("standard layout")[p.idx]
    }
}

fn central_difference<E>(net: &mut Mlp, h: f64, eval: &E, p: ParamRef) -> Result<f64, NnError>
where
    E: Fn(&Mlp) -> Result<f64, NnError>,
{
    let original = *param_mut(net, p);
    *param_mut(net, p) = original + h;
    let plus = eval(net)?;
    *param_mut(net, p) = original - h;
    let minus = eval(net)?;
    *param_mut(net, p) = original;
    Ok((plus - minus) / (2.0 * h))
}

pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

/// Squared error `Σ (y − t)²` and its gradient.
pub fn squared_error(output: &[f64], target: &[f64]) -> (f64, Vec<f64>) {
    let loss = output.iter().zip(target).map(|(y, t)| (y - t).powi(2)).sum();
    let grad = output.iter().zip(target).map(|(y, t)| 2.0 * (y - t)).collect();
    (loss, grad)
}
