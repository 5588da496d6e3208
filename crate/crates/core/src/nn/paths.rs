//! Jacobian entries as sums of weight products over active paths.
//!
//! For a bias-free fully-connected ReLU network, the derivative of output k
//! with respect to input j equals the sum, over every input-to-output neuron
//! path whose ReLU gates are all open (pre-activation strictly positive), of
//! the product of the traversed parameters. This enumerates the paths
//! explicitly, so it is an independent route to the same matrix that
//! [`jacobian`](crate::nn::jacobian) computes by backpropagation.

use crate::nn::{Activation, Layer, Network};
use crate::tensor::Tensor;
use crate::{Error, Result};

const PATH_GUARD: u128 = 1_000_000;

/// Explicit path-sum Jacobian, `class_count` rows of length `n_0`.
pub fn jacobian_path_sum(net: &Network, x: &Tensor) -> Result<Vec<Vec<f64>>> {
    let mut widths = vec![x.len()];
    let mut dense = Vec::new();
    for layer in net.layers() {
        match layer {
            Layer::Dense(d) => {
                if d.bias.is_some() {
                    return Err(Error::Unsupported(
                        "path-sum jacobian requires bias-free networks".into(),
                    ));
                }
                if !d.activation.is_piecewise_linear() {
                    return Err(Error::Unsupported(
                        "path-sum jacobian requires ReLU/identity activations".into(),
                    ));
                }
                widths.push(d.n_out);
                dense.push(d);
            }
            _ => {
                return Err(Error::Unsupported(
                    "path-sum jacobian requires fully-connected layers only".into(),
                ))
            }
        }
    }
    let total_paths: u128 = widths.iter().map(|&w| w as u128).product();
    if total_paths > PATH_GUARD {
        return Err(Error::Resource(format!(
            "{} paths exceed the {} path guard",
            total_paths, PATH_GUARD
        )));
    }

    let (_, record) = net.forward(x)?;
    // gates[l][v]: whether neuron v of layer l+1 passes signal through.
    let gates: Vec<Vec<bool>> = net
        .layers()
        .iter()
        .zip(&record.layers)
        .map(|(layer, act)| match layer.activation() {
            Some(Activation::Relu) => act.pre.data().iter().map(|&z| z > 0.0).collect(),
            _ => vec![true; act.pre.len()],
        })
        .collect();

    let depth = dense.len();
    let mut out = vec![vec![0.0; widths[0]]; *widths.last().unwrap()];
    for j in 0..widths[0] {
        // Depth-first walk over u^0 = j, u^1, ..., u^L, accumulating the
        // weight product; closed gates prune the branch.
        let mut stack: Vec<(usize, usize, f64)> = vec![(0, j, 1.0)];
        while let Some((level, u, prod)) = stack.pop() {
            if level == depth {
                out[u][j] += prod;
                continue;
            }
            let d = dense[level];
            for v in 0..d.n_out {
                if !gates[level][v] {
                    continue;
                }
                let w = d.weight[v * d.n_in + u];
                stack.push((level + 1, v, prod * w));
            }
        }
    }
    Ok(out)
}
