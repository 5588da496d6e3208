//! Minimal dense/convolutional network engine.
//!
//! Networks are immutable values after construction except inside
//! [`train::train`]; every read-only operation is safe to call concurrently.
//! Each network carries a snapshot of its parameters at initialization, which
//! the under-optimized edge criterion needs later.

mod autodiff;
mod conv;
mod paths;
mod train;
pub(crate) mod weights_io;

pub use autodiff::{grad_input, jacobian};
pub use conv::{conv_as_matrix, SparseEntry, SparseMatrix};
pub use paths::jacobian_path_sum;
pub use train::{train, train_with, OptimizerKind, TrainConfig, TrainStats};
pub use weights_io::{
    load_network, network_file_hash, network_from_bytes, network_to_bytes, save_network,
};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::tensor::Tensor;
use crate::{Error, Result};

/// Per-neuron activation function.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Identity,
    /// Only valid on the output layer.
    Softmax,
}

impl Activation {
    fn apply(&self, pre: &[f64], out: &mut Vec<f64>) {
        out.clear();
        match self {
            Activation::Relu => out.extend(pre.iter().map(|&v| if v > 0.0 { v } else { 0.0 })),
            Activation::Identity => out.extend_from_slice(pre),
            Activation::Softmax => {
                let max = pre.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                out.extend(pre.iter().map(|&v| (v - max).exp()));
                let sum: f64 = out.iter().sum();
                for v in out.iter_mut() {
                    *v /= sum;
                }
            }
        }
    }

    /// Piecewise-linear activations admit the path-sum and Jacobian oracles.
    pub fn is_piecewise_linear(&self) -> bool {
        matches!(self, Activation::Relu | Activation::Identity)
    }
}

/// A dense (fully-connected) layer: `n_out x n_in` weights, row-major.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DenseLayer {
    pub n_in: usize,
    pub n_out: usize,
    /// `weight[o * n_in + i]` connects input neuron `i` to output neuron `o`.
    pub weight: Vec<f64>,
    pub bias: Option<Vec<f64>>,
    pub activation: Activation,
}

/// A 2-D convolution layer over `(in_ch, h, w)` inputs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConvLayer {
    pub in_ch: usize,
    pub out_ch: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub padding: usize,
    /// `kernel[((oc * in_ch + ic) * kh + ki) * kw + kj]`.
    pub kernel: Vec<f64>,
    /// One bias per output channel.
    pub bias: Option<Vec<f64>>,
    pub activation: Activation,
}

impl ConvLayer {
    pub fn output_hw(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        let eff_h = h + 2 * self.padding;
        let eff_w = w + 2 * self.padding;
        if eff_h < self.kh || eff_w < self.kw || self.stride == 0 {
            return Err(Error::Shape {
                expected: format!("input at least {}x{} with stride >= 1", self.kh, self.kw),
                got: format!("{}x{} (stride {})", h, w, self.stride),
            });
        }
        Ok((
            (eff_h - self.kh) / self.stride + 1,
            (eff_w - self.kw) / self.stride + 1,
        ))
    }

    pub fn param_count(&self) -> usize {
        self.out_ch * self.in_ch * self.kh * self.kw
    }
}

/// One layer of a network.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum Layer {
    Dense(DenseLayer),
    Conv2d(ConvLayer),
    Flatten,
}

impl Layer {
    pub fn has_params(&self) -> bool {
        !matches!(self, Layer::Flatten)
    }

    pub fn activation(&self) -> Option<Activation> {
        match self {
            Layer::Dense(d) => Some(d.activation),
            Layer::Conv2d(c) => Some(c.activation),
            Layer::Flatten => None,
        }
    }

    /// Number of scalar parameters in the weight part (biases excluded).
    pub fn weight_count(&self) -> usize {
        match self {
            Layer::Dense(d) => d.weight.len(),
            Layer::Conv2d(c) => c.kernel.len(),
            Layer::Flatten => 0,
        }
    }

    pub fn weights(&self) -> &[f64] {
        match self {
            Layer::Dense(d) => &d.weight,
            Layer::Conv2d(c) => &c.kernel,
            Layer::Flatten => &[],
        }
    }

    fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        match self {
            Layer::Dense(d) => {
                let n: usize = input.iter().product();
                if input.len() != 1 || n != d.n_in {
                    return Err(Error::Shape {
                        expected: format!("[{}]", d.n_in),
                        got: format!("{:?}", input),
                    });
                }
                Ok(vec![d.n_out])
            }
            Layer::Conv2d(c) => {
                if input.len() != 3 || input[0] != c.in_ch {
                    return Err(Error::Shape {
                        expected: format!("[{}, h, w]", c.in_ch),
                        got: format!("{:?}", input),
                    });
                }
                let (oh, ow) = c.output_hw(input[1], input[2])?;
                Ok(vec![c.out_ch, oh, ow])
            }
            Layer::Flatten => Ok(vec![input.iter().product()]),
        }
    }
}

/// Describes a layer to be initialized; weights are drawn at `Network` build
/// time.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum LayerDef {
    Dense {
        n_in: usize,
        n_out: usize,
        bias: bool,
        activation: Activation,
    },
    Conv2d {
        in_ch: usize,
        out_ch: usize,
        kh: usize,
        kw: usize,
        stride: usize,
        padding: usize,
        bias: bool,
        activation: Activation,
    },
    Flatten,
}

/// Frozen copy of one layer's parameters at initialization time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSnapshot {
    pub weight: Vec<f64>,
    pub bias: Option<Vec<f64>>,
}

/// A layered feedforward network plus its initialization snapshot.
#[derive(Debug, Clone)]
pub struct Network {
    input_shape: Vec<usize>,
    layers: Vec<Layer>,
    /// One entry per layer; `None` for parameterless layers. Never mutated
    /// after construction.
    init_weights: Vec<Option<ParamSnapshot>>,
    seed: u64,
    class_count: usize,
}

/// Per-layer pre-activation and output tensors saved during a forward pass.
#[derive(Debug, Clone)]
pub struct ActivationRecord {
    pub input: Tensor,
    pub layers: Vec<LayerActivation>,
}

#[derive(Debug, Clone)]
pub struct LayerActivation {
    pub pre: Tensor,
    pub post: Tensor,
}

impl ActivationRecord {
    /// Output of neuron layer `l`, with `l = 0` being the input.
    pub fn output(&self, l: usize) -> &Tensor {
        if l == 0 {
            &self.input
        } else {
            &self.layers[l - 1].post
        }
    }
}

impl Network {
    /// Initialize a network with seeded He-uniform weights and zero biases.
    pub fn init(
        input_shape: Vec<usize>,
        defs: &[LayerDef],
        class_count: usize,
        seed: u64,
    ) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layers = Vec::with_capacity(defs.len());
        for def in defs {
            layers.push(match *def {
                LayerDef::Dense {
                    n_in,
                    n_out,
                    bias,
                    activation,
                } => {
                    let bound = (6.0 / n_in as f64).sqrt();
                    let weight = (0..n_out * n_in)
                        .map(|_| rng.random_range(-bound..bound))
                        .collect();
                    Layer::Dense(DenseLayer {
                        n_in,
                        n_out,
                        weight,
                        bias: bias.then(|| vec![0.0; n_out]),
                        activation,
                    })
                }
                LayerDef::Conv2d {
                    in_ch,
                    out_ch,
                    kh,
                    kw,
                    stride,
                    padding,
                    bias,
                    activation,
                } => {
                    let fan_in = in_ch * kh * kw;
                    let bound = (6.0 / fan_in as f64).sqrt();
                    let kernel = (0..out_ch * fan_in)
                        .map(|_| rng.random_range(-bound..bound))
                        .collect();
                    Layer::Conv2d(ConvLayer {
                        in_ch,
                        out_ch,
                        kh,
                        kw,
                        stride,
                        padding,
                        kernel,
                        bias: bias.then(|| vec![0.0; out_ch]),
                        activation,
                    })
                }
                LayerDef::Flatten => Layer::Flatten,
            });
        }
        Self::assemble(input_shape, layers, class_count, seed)
    }

    /// Build a network from explicit layers; the given parameters become both
    /// the current weights and the initialization snapshot.
    pub fn with_weights(
        input_shape: Vec<usize>,
        layers: Vec<Layer>,
        class_count: usize,
    ) -> Result<Self> {
        Self::assemble(input_shape, layers, class_count, 0)
    }

    fn assemble(
        input_shape: Vec<usize>,
        layers: Vec<Layer>,
        class_count: usize,
        seed: u64,
    ) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Config("network needs at least one layer".into()));
        }
        // Validate that consecutive shapes compose and softmax stays at the
        // output.
        let mut shape = input_shape.clone();
        for (i, layer) in layers.iter().enumerate() {
            if layer.activation() == Some(Activation::Softmax) && i + 1 != layers.len() {
                return Err(Error::Config(
                    "softmax activation is only allowed on the output layer".into(),
                ));
            }
            shape = layer.output_shape(&shape)?;
        }
        let out_len: usize = shape.iter().product();
        if out_len != class_count {
            return Err(Error::Shape {
                expected: format!("{} output neurons", class_count),
                got: format!("{:?}", shape),
            });
        }
        let init_weights = layers
            .iter()
            .map(|l| match l {
                Layer::Dense(d) => Some(ParamSnapshot {
                    weight: d.weight.clone(),
                    bias: d.bias.clone(),
                }),
                Layer::Conv2d(c) => Some(ParamSnapshot {
                    weight: c.kernel.clone(),
                    bias: c.bias.clone(),
                }),
                Layer::Flatten => None,
            })
            .collect();
        Ok(Self {
            input_shape,
            layers,
            init_weights,
            seed,
            class_count,
        })
    }

    /// Rebuild from parts loaded off disk. `init` must shape-match `layers`.
    pub(crate) fn from_parts(
        input_shape: Vec<usize>,
        layers: Vec<Layer>,
        init: Vec<Option<ParamSnapshot>>,
        class_count: usize,
        seed: u64,
    ) -> Result<Self> {
        let mut net = Self::assemble(input_shape, layers, class_count, seed)?;
        for (i, snap) in init.iter().enumerate() {
            match (snap, &net.layers[i]) {
                (Some(s), l) if l.has_params() => {
                    if s.weight.len() != l.weight_count() {
                        return Err(Error::Shape {
                            expected: format!("{} init weights in layer {}", l.weight_count(), i),
                            got: format!("{}", s.weight.len()),
                        });
                    }
                }
                (None, Layer::Flatten) => {}
                _ => {
                    return Err(Error::Shape {
                        expected: "init snapshot matching layer kinds".into(),
                        got: format!("mismatch at layer {}", i),
                    })
                }
            }
        }
        net.init_weights = init;
        Ok(net)
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    /// Mutable access to the current parameters. The initialization snapshot
    /// is not reachable from here.
    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn init_snapshot(&self, layer: usize) -> Option<&ParamSnapshot> {
        self.init_weights[layer].as_ref()
    }

    pub fn has_init_snapshot(&self) -> bool {
        self.layers
            .iter()
            .zip(&self.init_weights)
            .all(|(l, s)| !l.has_params() || s.is_some())
    }

    /// Drop the initialization snapshot, as for a network obtained pre-trained.
    pub fn forget_init_snapshot(&mut self) {
        for s in &mut self.init_weights {
            *s = None;
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    /// Indices (into `layers`) of the parameterized layers, in order.
    pub fn param_layer_indices(&self) -> Vec<usize> {
        self.layers
            .iter()
            .enumerate()
            .filter(|(_, l)| l.has_params())
            .map(|(i, _)| i)
            .collect()
    }

    /// Shape flowing into layer `i`.
    pub fn input_shape_of(&self, layer: usize) -> Result<Vec<usize>> {
        let mut shape = self.input_shape.clone();
        for l in &self.layers[..layer] {
            shape = l.output_shape(&shape)?;
        }
        Ok(shape)
    }

    /// Run the forward pass, returning output logits and every intermediate
    /// activation.
    pub fn forward(&self, x: &Tensor) -> Result<(Tensor, ActivationRecord)> {
        if x.shape() != self.input_shape.as_slice() {
            return Err(Error::Shape {
                expected: format!("{:?}", self.input_shape),
                got: format!("{:?}", x.shape()),
            });
        }
        let mut acts = Vec::with_capacity(self.layers.len());
        let mut current = x.clone();
        for layer in &self.layers {
            let (pre, post) = match layer {
                Layer::Dense(d) => {
                    let input = current.data();
                    let mut pre = vec![0.0; d.n_out];
                    for o in 0..d.n_out {
                        let row = &d.weight[o * d.n_in..(o + 1) * d.n_in];
                        let mut acc = 0.0;
                        for i in 0..d.n_in {
                            acc += row[i] * input[i];
                        }
                        if let Some(b) = &d.bias {
                            acc += b[o];
                        }
                        pre[o] = acc;
                    }
                    let mut post = Vec::new();
                    d.activation.apply(&pre, &mut post);
                    (
                        Tensor::new(vec![d.n_out], pre)?,
                        Tensor::new(vec![d.n_out], post)?,
                    )
                }
                Layer::Conv2d(c) => {
                    let pre = conv::conv2d_forward(c, &current)?;
                    let mut post = Vec::new();
                    c.activation.apply(pre.data(), &mut post);
                    let post = Tensor::new(pre.shape().to_vec(), post)?;
                    (pre, post)
                }
                Layer::Flatten => {
                    let flat = current.reshape(vec![current.len()])?;
                    (flat.clone(), flat)
                }
            };
            current = post.clone();
            acts.push(LayerActivation { pre, post });
        }
        let record = ActivationRecord {
            input: x.clone(),
            layers: acts,
        };
        Ok((current, record))
    }

    /// Predicted class for an input.
    pub fn predict(&self, x: &Tensor) -> Result<usize> {
        Ok(self.forward(x)?.0.argmax())
    }

    /// Classification accuracy over a labeled set.
    pub fn accuracy(&self, inputs: &[Tensor], labels: &[usize]) -> Result<f64> {
        let mut correct = 0usize;
        for (x, &y) in inputs.iter().zip(labels) {
            if self.predict(x)? == y {
                correct += 1;
            }
        }
        Ok(correct as f64 / inputs.len().max(1) as f64)
    }
}

/// Cross-entropy of softmax(output) against a target class.
///
/// Returns the loss and its gradient with respect to the last layer's
/// pre-activation. A softmax output activation is fused with the loss; other
/// activations are differentiated through normally.
pub(crate) fn softmax_ce_from_record(
    net: &Network,
    record: &ActivationRecord,
    target: usize,
) -> (f64, Vec<f64>) {
    let last = record.layers.last().expect("network has layers");
    let last_act = net
        .layers
        .last()
        .and_then(|l| l.activation())
        .unwrap_or(Activation::Identity);
    // Softmax probabilities from the value the softmax sees.
    let logits = if last_act == Activation::Softmax {
        last.pre.data()
    } else {
        last.post.data()
    };
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    let loss = -(exps[target] / sum).ln();
    let mut grad: Vec<f64> = exps.iter().map(|&e| e / sum).collect();
    grad[target] -= 1.0;
    if last_act != Activation::Softmax {
        // grad is w.r.t. post; push through the output activation.
        autodiff::activation_backward_in_place(last_act, last.pre.data(), &mut grad);
    }
    (loss, grad)
}
