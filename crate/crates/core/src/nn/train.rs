//! Minibatch training with SGD or Adam.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::nn::autodiff::{loss_and_grads, ParamGrads};
use crate::nn::{Layer, Network};
use crate::tensor::Tensor;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub optimizer: OptimizerKind,
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Seed for batch shuffling.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            optimizer: OptimizerKind::Adam,
            lr: 0.001,
            epochs: 50,
            batch_size: 32,
            seed: 0,
        }
    }
}

/// Mean loss per epoch, in epoch order.
#[derive(Debug, Clone)]
pub struct TrainStats {
    pub epoch_loss: Vec<f64>,
}

struct AdamState {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    mb: Vec<Vec<f64>>,
    vb: Vec<Vec<f64>>,
    t: usize,
}

const ADAM_B1: f64 = 0.9;
const ADAM_B2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

/// Train in place. The initialization snapshot is untouched; only the current
/// parameters move.
pub fn train(
    net: &mut Network,
    inputs: &[Tensor],
    labels: &[usize],
    config: &TrainConfig,
) -> Result<TrainStats> {
    train_with(net, inputs, labels, config, |_, batch, _| {
        Ok(batch.to_vec())
    })
}

/// Training loop with a per-batch preprocessing hook. The hook sees the
/// network as it stands before the gradient step; adversarial training uses
/// it to perturb each batch.
pub fn train_with<F>(
    net: &mut Network,
    inputs: &[Tensor],
    labels: &[usize],
    config: &TrainConfig,
    mut map_batch: F,
) -> Result<TrainStats>
where
    F: FnMut(&Network, &[Tensor], &[usize]) -> Result<Vec<Tensor>>,
{
    if inputs.is_empty() || inputs.len() != labels.len() {
        return Err(Error::Config(format!(
            "need a non-empty dataset with matching labels ({} inputs, {} labels)",
            inputs.len(),
            labels.len()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= net.class_count()) {
        return Err(Error::Config(format!(
            "label {} out of range (K = {})",
            bad,
            net.class_count()
        )));
    }
    if config.batch_size == 0 || config.lr <= 0.0 {
        return Err(Error::Config("batch_size and lr must be positive".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut adam = AdamState::new(net);
    let mut epoch_loss = Vec::with_capacity(config.epochs);
    let mut order: Vec<usize> = (0..inputs.len()).collect();

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut seen = 0usize;
        for (batch_idx, chunk) in order.chunks(config.batch_size).enumerate() {
            let batch_x: Vec<Tensor> = chunk.iter().map(|&i| inputs[i].clone()).collect();
            let batch_y: Vec<usize> = chunk.iter().map(|&i| labels[i]).collect();
            let batch_x = map_batch(net, &batch_x, &batch_y)?;

            let mut acc: Option<ParamGrads> = None;
            let mut batch_loss = 0.0;
            for (x, &y) in batch_x.iter().zip(&batch_y) {
                let (loss, grads) = loss_and_grads(net, x, y)?;
                batch_loss += loss;
                acc = Some(match acc {
                    None => grads,
                    Some(mut a) => {
                        accumulate(&mut a, &grads);
                        a
                    }
                });
            }
            let scale = 1.0 / batch_x.len() as f64;
            batch_loss *= scale;
            if !batch_loss.is_finite() {
                return Err(Error::Divergence {
                    epoch,
                    batch: batch_idx,
                });
            }
            let grads = acc.expect("non-empty batch");
            match config.optimizer {
                OptimizerKind::Sgd => sgd_step(net, &grads, config.lr * scale),
                OptimizerKind::Adam => adam.step(net, &grads, scale, config.lr),
            }
            loss_sum += batch_loss * batch_x.len() as f64;
            seen += batch_x.len();
        }
        epoch_loss.push(loss_sum / seen as f64);
    }
    Ok(TrainStats { epoch_loss })
}

fn accumulate(acc: &mut ParamGrads, g: &ParamGrads) {
    for (a, b) in acc.weight.iter_mut().zip(&g.weight) {
        if let (Some(a), Some(b)) = (a.as_mut(), b.as_ref()) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }
    for (a, b) in acc.bias.iter_mut().zip(&g.bias) {
        if let (Some(a), Some(b)) = (a.as_mut(), b.as_ref()) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }
}

fn for_each_param(net: &mut Network, mut f: impl FnMut(usize, bool, &mut [f64])) {
    for (l, layer) in net.layers_mut().iter_mut().enumerate() {
        match layer {
            Layer::Dense(d) => {
                f(l, false, &mut d.weight);
                if let Some(b) = &mut d.bias {
                    f(l, true, b);
                }
            }
            Layer::Conv2d(c) => {
                f(l, false, &mut c.kernel);
                if let Some(b) = &mut c.bias {
                    f(l, true, b);
                }
            }
            Layer::Flatten => {}
        }
    }
}

fn sgd_step(net: &mut Network, grads: &ParamGrads, lr: f64) {
    for_each_param(net, |l, is_bias, params| {
        let g = if is_bias { &grads.bias[l] } else { &grads.weight[l] };
        if let Some(g) = g {
            for (p, gi) in params.iter_mut().zip(g) {
                *p -= lr * gi;
            }
        }
    });
}

impl AdamState {
    fn new(net: &Network) -> Self {
        let zeros_like = |bias: bool| -> Vec<Vec<f64>> {
            net.layers()
                .iter()
                .map(|l| match l {
                    Layer::Dense(d) => {
                        if bias {
                            vec![0.0; d.bias.as_ref().map_or(0, |b| b.len())]
                        } else {
                            vec![0.0; d.weight.len()]
                        }
                    }
                    Layer::Conv2d(c) => {
                        if bias {
                            vec![0.0; c.bias.as_ref().map_or(0, |b| b.len())]
                        } else {
                            vec![0.0; c.kernel.len()]
                        }
                    }
                    Layer::Flatten => Vec::new(),
                })
                .collect()
        };
        Self {
            m: zeros_like(false),
            v: zeros_like(false),
            mb: zeros_like(true),
            vb: zeros_like(true),
            t: 0,
        }
    }

    fn step(&mut self, net: &mut Network, grads: &ParamGrads, grad_scale: f64, lr: f64) {
        self.t += 1;
        let t = self.t as f64;
        let bc1 = 1.0 - ADAM_B1.powf(t);
        let bc2 = 1.0 - ADAM_B2.powf(t);
        let (m, v, mb, vb) = (&mut self.m, &mut self.v, &mut self.mb, &mut self.vb);
        for_each_param(net, |l, is_bias, params| {
            let g = if is_bias { &grads.bias[l] } else { &grads.weight[l] };
            let Some(g) = g else { return };
            let (m, v) = if is_bias {
                (&mut mb[l], &mut vb[l])
            } else {
                (&mut m[l], &mut v[l])
            };
            for i in 0..params.len() {
                let gi = g[i] * grad_scale;
                m[i] = ADAM_B1 * m[i] + (1.0 - ADAM_B1) * gi;
                v[i] = ADAM_B2 * v[i] + (1.0 - ADAM_B2) * gi * gi;
                let mhat = m[i] / bc1;
                let vhat = v[i] / bc2;
                params[i] -= lr * mhat / (vhat.sqrt() + ADAM_EPS);
            }
        });
    }
}
