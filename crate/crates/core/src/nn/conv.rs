//! Convolution as an explicit sparse matrix.
//!
//! A conv layer is linear in its input, so it has a fully-connected
//! counterpart: a sparse matrix of stacked, strided Toeplitz blocks built from
//! the kernel. The expansion is what lets conv layers enter induced graphs as
//! plain edges. The direct convolution and the matrix expansion iterate taps
//! in the same (channel, row, column) order so their per-element sums agree
//! bit for bit.

use crate::nn::ConvLayer;
use crate::tensor::Tensor;
use crate::{Error, Result};

/// One structural nonzero of the expanded matrix. `param` is the flat kernel
/// index the entry was copied from; many entries share one `param`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SparseEntry {
    pub row: usize,
    pub col: usize,
    pub value: f64,
    pub param: usize,
}

/// Sparse matrix in (row, col, value) triples, sorted by (row, col).
#[derive(Debug, Clone)]
pub struct SparseMatrix {
    pub rows: usize,
    pub cols: usize,
    pub entries: Vec<SparseEntry>,
}

impl SparseMatrix {
    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.cols {
            return Err(Error::Shape {
                expected: format!("vector of length {}", self.cols),
                got: format!("{}", x.len()),
            });
        }
        let mut out = vec![0.0; self.rows];
        for e in &self.entries {
            out[e.row] += e.value * x[e.col];
        }
        Ok(out)
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut m = vec![vec![0.0; self.cols]; self.rows];
        for e in &self.entries {
            m[e.row][e.col] = e.value;
        }
        m
    }
}

/// Expand a conv layer over a given `(in_ch, h, w)` input into its sparse
/// fully-connected counterpart, bias excluded.
pub fn conv_as_matrix(layer: &ConvLayer, input_shape: &[usize]) -> Result<SparseMatrix> {
    let (in_ch, h, w) = unpack_shape(layer, input_shape)?;
    let (oh, ow) = layer.output_hw(h, w)?;
    let rows = layer.out_ch * oh * ow;
    let cols = in_ch * h * w;
    let mut entries = Vec::new();
    let s = layer.stride as isize;
    let p = layer.padding as isize;
    for oc in 0..layer.out_ch {
        for oi in 0..oh {
            for oj in 0..ow {
                let row = (oc * oh + oi) * ow + oj;
                for ic in 0..in_ch {
                    for ki in 0..layer.kh {
                        for kj in 0..layer.kw {
                            let ii = oi as isize * s + ki as isize - p;
                            let jj = oj as isize * s + kj as isize - p;
                            if ii < 0 || jj < 0 || ii >= h as isize || jj >= w as isize {
                                continue; // padding tap
                            }
                            let col = (ic * h + ii as usize) * w + jj as usize;
                            let param = ((oc * in_ch + ic) * layer.kh + ki) * layer.kw + kj;
                            entries.push(SparseEntry {
                                row,
                                col,
                                value: layer.kernel[param],
                                param,
                            });
                        }
                    }
                }
            }
        }
    }
    Ok(SparseMatrix {
        rows,
        cols,
        entries,
    })
}

/// Direct convolution (pre-activation), taps accumulated in (channel, kernel
/// row, kernel column) order.
pub(crate) fn conv2d_forward(layer: &ConvLayer, input: &Tensor) -> Result<Tensor> {
    let (in_ch, h, w) = unpack_shape(layer, input.shape())?;
    let (oh, ow) = layer.output_hw(h, w)?;
    let x = input.data();
    let mut out = vec![0.0; layer.out_ch * oh * ow];
    let s = layer.stride as isize;
    let p = layer.padding as isize;
    for oc in 0..layer.out_ch {
        for oi in 0..oh {
            for oj in 0..ow {
                let mut acc = 0.0;
                for ic in 0..in_ch {
                    for ki in 0..layer.kh {
                        for kj in 0..layer.kw {
                            let ii = oi as isize * s + ki as isize - p;
                            let jj = oj as isize * s + kj as isize - p;
                            if ii < 0 || jj < 0 || ii >= h as isize || jj >= w as isize {
                                continue;
                            }
                            let k = ((oc * in_ch + ic) * layer.kh + ki) * layer.kw + kj;
                            acc += layer.kernel[k] * x[(ic * h + ii as usize) * w + jj as usize];
                        }
                    }
                }
                if let Some(b) = &layer.bias {
                    acc += b[oc];
                }
                out[(oc * oh + oi) * ow + oj] = acc;
            }
        }
    }
    Tensor::new(vec![layer.out_ch, oh, ow], out)
}

fn unpack_shape(layer: &ConvLayer, shape: &[usize]) -> Result<(usize, usize, usize)> {
    if shape.len() != 3 || shape[0] != layer.in_ch {
        return Err(Error::Shape {
            expected: format!("[{}, h, w]", layer.in_ch),
            got: format!("{:?}", shape),
        });
    }
    Ok((shape[0], shape[1], shape[2]))
}
