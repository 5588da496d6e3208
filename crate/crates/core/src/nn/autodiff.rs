//! Reverse-mode differentiation through the layer stack.

use crate::nn::{softmax_ce_from_record, ActivationRecord, Activation, Layer, Network};
use crate::tensor::Tensor;
use crate::{Error, Result};

/// Gradients of a scalar loss with respect to every parameter, one entry per
/// layer (`None` for parameterless layers).
#[derive(Debug, Clone)]
pub(crate) struct ParamGrads {
    pub weight: Vec<Option<Vec<f64>>>,
    pub bias: Vec<Option<Vec<f64>>>,
}

/// Where the seed gradient is taken: at the last layer's output, or directly
/// at its pre-activation (used when the output activation is fused into the
/// loss).
pub(crate) enum SeedGrad {
    AtPost(Vec<f64>),
    AtPre(Vec<f64>),
}

/// Multiply a gradient (w.r.t. post-activation) by the activation derivative,
/// yielding the gradient w.r.t. pre-activation. ReLU uses subgradient 0 at
/// exactly 0.
pub(crate) fn activation_backward_in_place(act: Activation, pre: &[f64], grad: &mut [f64]) {
    match act {
        Activation::Identity => {}
        Activation::Relu => {
            for (g, &z) in grad.iter_mut().zip(pre) {
                if z <= 0.0 {
                    *g = 0.0;
                }
            }
        }
        Activation::Softmax => {
            // Jacobian of softmax: diag(p) - p p^T.
            let max = pre.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut p: Vec<f64> = pre.iter().map(|&v| (v - max).exp()).collect();
            let sum: f64 = p.iter().sum();
            for v in &mut p {
                *v /= sum;
            }
            let dot: f64 = grad.iter().zip(&p).map(|(g, pi)| g * pi).sum();
            for (g, &pi) in grad.iter_mut().zip(&p) {
                *g = pi * (*g - dot);
            }
        }
    }
}

/// Backpropagate a seed gradient through the whole stack. Returns parameter
/// gradients and the gradient with respect to the input.
pub(crate) fn backward(
    net: &Network,
    record: &ActivationRecord,
    seed: SeedGrad,
) -> Result<(ParamGrads, Tensor)> {
    let n_layers = net.layers().len();
    if record.layers.len() != n_layers {
        return Err(Error::RecordMismatch(format!(
            "record has {} layers, network has {}",
            record.layers.len(),
            n_layers
        )));
    }
    let mut grads = ParamGrads {
        weight: vec![None; n_layers],
        bias: vec![None; n_layers],
    };

    // Current gradient w.r.t. the pre-activation of the layer being processed.
    let mut grad: Vec<f64>;
    match seed {
        SeedGrad::AtPre(g) => grad = g,
        SeedGrad::AtPost(mut g) => {
            if let Some(act) = net.layers()[n_layers - 1].activation() {
                activation_backward_in_place(act, record.layers[n_layers - 1].pre.data(), &mut g);
            }
            grad = g;
        }
    }

    for l in (0..n_layers).rev() {
        let input = record.output(l);
        let layer = &net.layers()[l];
        let mut grad_input = vec![0.0; input.len()];
        match layer {
            Layer::Dense(d) => {
                let a = input.data();
                let mut dw = vec![0.0; d.weight.len()];
                for o in 0..d.n_out {
                    let go = grad[o];
                    for i in 0..d.n_in {
                        dw[o * d.n_in + i] = go * a[i];
                        grad_input[i] += d.weight[o * d.n_in + i] * go;
                    }
                }
                grads.weight[l] = Some(dw);
                if d.bias.is_some() {
                    grads.bias[l] = Some(grad.clone());
                }
            }
            Layer::Conv2d(c) => {
                let shape = input.shape();
                let (h, w) = (shape[1], shape[2]);
                let (oh, ow) = c.output_hw(h, w)?;
                let a = input.data();
                let mut dk = vec![0.0; c.kernel.len()];
                let mut db = vec![0.0; c.out_ch];
                let s = c.stride as isize;
                let p = c.padding as isize;
                for oc in 0..c.out_ch {
                    for oi in 0..oh {
                        for oj in 0..ow {
                            let g = grad[(oc * oh + oi) * ow + oj];
                            db[oc] += g;
                            for ic in 0..c.in_ch {
                                for ki in 0..c.kh {
                                    for kj in 0..c.kw {
                                        let ii = oi as isize * s + ki as isize - p;
                                        let jj = oj as isize * s + kj as isize - p;
                                        if ii < 0 || jj < 0 || ii >= h as isize || jj >= w as isize
                                        {
                                            continue;
                                        }
                                        let k = ((oc * c.in_ch + ic) * c.kh + ki) * c.kw + kj;
                                        let xi = (ic * h + ii as usize) * w + jj as usize;
                                        dk[k] += g * a[xi];
                                        grad_input[xi] += g * c.kernel[k];
                                    }
                                }
                            }
                        }
                    }
                }
                grads.weight[l] = Some(dk);
                if c.bias.is_some() {
                    grads.bias[l] = Some(db);
                }
            }
            Layer::Flatten => {
                grad_input.copy_from_slice(&grad);
            }
        }
        // Push through the previous layer's activation.
        if l > 0 {
            if let Some(act) = net.layers()[l - 1].activation() {
                activation_backward_in_place(act, record.layers[l - 1].pre.data(), &mut grad_input);
            }
        }
        grad = grad_input;
    }

    let input_grad = Tensor::new(record.input.shape().to_vec(), grad)?;
    Ok((grads, input_grad))
}

/// Gradient of the softmax cross-entropy loss with respect to the input.
pub fn grad_input(net: &Network, x: &Tensor, target_class: usize) -> Result<Tensor> {
    if target_class >= net.class_count() {
        return Err(Error::Config(format!(
            "target class {} out of range (K = {})",
            target_class,
            net.class_count()
        )));
    }
    let (logits, record) = net.forward(x)?;
    if !logits.all_finite() {
        return Err(Error::Numeric {
            context: "forward pass".into(),
        });
    }
    let (loss, grad_pre) = softmax_ce_from_record(net, &record, target_class);
    if !loss.is_finite() {
        return Err(Error::Numeric {
            context: "loss".into(),
        });
    }
    let (_, g) = backward(net, &record, SeedGrad::AtPre(grad_pre))?;
    if !g.all_finite() {
        return Err(Error::Numeric {
            context: "input gradient".into(),
        });
    }
    Ok(g)
}

/// Loss plus gradients for one example; used by the training loop.
pub(crate) fn loss_and_grads(
    net: &Network,
    x: &Tensor,
    target: usize,
) -> Result<(f64, ParamGrads)> {
    let (_, record) = net.forward(x)?;
    let (loss, grad_pre) = softmax_ce_from_record(net, &record, target);
    let (grads, _) = backward(net, &record, SeedGrad::AtPre(grad_pre))?;
    Ok((loss, grads))
}

/// Jacobian of the raw network output, one row of length `n_0` per class.
///
/// Requires piecewise-linear activations throughout (no softmax).
pub fn jacobian(net: &Network, x: &Tensor) -> Result<Vec<Vec<f64>>> {
    for layer in net.layers() {
        if let Some(act) = layer.activation() {
            if !act.is_piecewise_linear() {
                return Err(Error::Unsupported(
                    "jacobian requires ReLU/identity activations only".into(),
                ));
            }
        }
    }
    let (_, record) = net.forward(x)?;
    let k = net.class_count();
    let mut rows = Vec::with_capacity(k);
    for class in 0..k {
        let mut seed = vec![0.0; k];
        seed[class] = 1.0;
        let (_, g) = backward(net, &record, SeedGrad::AtPost(seed))?;
        rows.push(g.data().to_vec());
    }
    Ok(rows)
}
