//! Per-input induced activation graphs and under-optimized edge masks.
//!
//! The induced graph puts one vertex on every neuron and one edge on every
//! structural connection between consecutive parameterized layers, weighted
//! by |activation x parameter|. Conv layers enter through their sparse
//! matrix expansion; flatten layers are pure reshapes and contribute no
//! vertices or edges of their own. Edge selection (which parameters to keep)
//! never looks at activations, so one mask serves every input.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::nn::{conv_as_matrix, ActivationRecord, Layer, Network, SparseEntry, SparseMatrix};
use crate::{Error, Result};

/// Weighted graph over a network's neurons for one input.
#[derive(Debug, Clone, PartialEq)]
pub struct InducedGraph {
    pub vertex_count: usize,
    /// Global index of the first neuron of each neuron layer (input first).
    pub layer_offsets: Vec<usize>,
    pub edges: Vec<GraphEdge>,
}

/// One edge: global source/destination vertices and the induced weight.
/// `layer` is the parameterized-layer ordinal, `param` the flat index of the
/// parameter the edge was built from (a conv parameter owns many edges).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GraphEdge {
    pub u: usize,
    pub v: usize,
    pub weight: f64,
    pub layer: usize,
    pub param: usize,
}

/// Which per-parameter statistic ranks the edges.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionCriterion {
    /// |W| - |W_init|; small means the parameter barely moved since
    /// initialization. Requires the snapshot.
    MagnitudeIncrease,
    /// |W| alone; the fallback when no snapshot exists.
    LargeFinal,
}

/// Keep the parameters with the smallest criterion value (under-optimized) or
/// the largest (well-optimized, for the comparison experiment).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionSide {
    Smallest,
    Largest,
}

/// Input-independent set of retained parameters, per selected layer.
#[derive(Debug, Clone)]
pub struct EdgeMask {
    pub criterion: SelectionCriterion,
    pub q: f64,
    /// Parameterized-layer ordinals covered by the mask.
    pub selected_layers: Vec<usize>,
    /// For each selected layer (keyed by ordinal): a keep-flag per flat
    /// parameter index.
    kept: Vec<Option<Vec<bool>>>,
}

impl EdgeMask {
    pub fn is_kept(&self, layer: usize, param: usize) -> bool {
        self.kept
            .get(layer)
            .and_then(|k| k.as_ref())
            .is_some_and(|flags| flags[param])
    }

    pub fn covers_layer(&self, layer: usize) -> bool {
        self.kept.get(layer).and_then(|k| k.as_ref()).is_some()
    }

    /// Sorted flat indices of the kept parameters of one layer.
    pub fn kept_indices(&self, layer: usize) -> Vec<usize> {
        match self.kept.get(layer).and_then(|k| k.as_ref()) {
            Some(flags) => flags
                .iter()
                .enumerate()
                .filter(|(_, &f)| f)
                .map(|(i, _)| i)
                .collect(),
            None => Vec::new(),
        }
    }
}

/// Precomputed per-layer matrix expansions for building induced graphs; the
/// expansion work happens once per network, not once per input.
pub struct GraphBuilder {
    expansions: Vec<SparseMatrix>,
    layer_offsets: Vec<usize>,
    vertex_count: usize,
    layer_specs: Vec<usize>,
    output_shapes: Vec<Vec<usize>>,
}

impl GraphBuilder {
    pub fn new(net: &Network) -> Result<Self> {
        let mut expansions = Vec::new();
        let mut layer_specs = Vec::new();
        let mut sizes = vec![net.input_shape().iter().product::<usize>()];
        for (j, layer) in net.layers().iter().enumerate() {
            let input_shape = net.input_shape_of(j)?;
            match layer {
                Layer::Dense(d) => {
                    let entries = (0..d.n_out * d.n_in)
                        .map(|p| SparseEntry {
                            row: p / d.n_in,
                            col: p % d.n_in,
                            value: d.weight[p],
                            param: p,
                        })
                        .collect();
                    expansions.push(SparseMatrix {
                        rows: d.n_out,
                        cols: d.n_in,
                        entries,
                    });
                    layer_specs.push(j);
                    sizes.push(d.n_out);
                }
                Layer::Conv2d(c) => {
                    let m = conv_as_matrix(c, &input_shape)?;
                    sizes.push(m.rows);
                    expansions.push(m);
                    layer_specs.push(j);
                }
                Layer::Flatten => {}
            }
        }
        let mut layer_offsets = Vec::with_capacity(sizes.len());
        let mut acc = 0;
        for s in &sizes {
            layer_offsets.push(acc);
            acc += s;
        }
        let output_shapes = (0..net.layers().len())
            .map(|j| net.input_shape_of(j + 1))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            expansions,
            layer_offsets,
            vertex_count: acc,
            layer_specs,
            output_shapes,
        })
    }

    /// Build the induced graph for one recorded forward pass.
    pub fn induce(&self, record: &ActivationRecord) -> Result<InducedGraph> {
        if record.layers.len() != self.output_shapes.len() {
            return Err(Error::RecordMismatch(format!(
                "record has {} layers, network has {}",
                record.layers.len(),
                self.output_shapes.len()
            )));
        }
        for (j, expect) in self.output_shapes.iter().enumerate() {
            if record.layers[j].post.shape() != expect.as_slice() {
                return Err(Error::RecordMismatch(format!(
                    "layer {} output shape {:?}, expected {:?}",
                    j,
                    record.layers[j].post.shape(),
                    expect
                )));
            }
        }
        let mut edges = Vec::new();
        for (k, m) in self.expansions.iter().enumerate() {
            let spec = self.layer_specs[k];
            let acts = record.output(spec);
            let src = self.layer_offsets[k];
            let dst = self.layer_offsets[k + 1];
            for e in &m.entries {
                edges.push(GraphEdge {
                    u: src + e.col,
                    v: dst + e.row,
                    weight: (acts.data()[e.col] * e.value).abs(),
                    layer: k,
                    param: e.param,
                });
            }
        }
        Ok(InducedGraph {
            vertex_count: self.vertex_count,
            layer_offsets: self.layer_offsets.clone(),
            edges,
        })
    }
}

/// One-shot convenience for [`GraphBuilder::induce`].
pub fn induce(net: &Network, record: &ActivationRecord) -> Result<InducedGraph> {
    GraphBuilder::new(net)?.induce(record)
}

/// Rank one layer's parameters and keep the q-fraction from the chosen side.
/// Ties break on the flat parameter index, lowest first, so masks are
/// deterministic and nested across q.
pub fn select_edges(
    net: &Network,
    q: f64,
    selected_layers: &[usize],
    criterion: SelectionCriterion,
    side: SelectionSide,
) -> Result<EdgeMask> {
    if !(q > 0.0 && q <= 1.0) {
        return Err(Error::Config(format!("q must lie in (0, 1], got {}", q)));
    }
    if selected_layers.is_empty() {
        return Err(Error::Config("no layers selected".into()));
    }
    let param_layers = net.param_layer_indices();
    let mut kept: Vec<Option<Vec<bool>>> = vec![None; param_layers.len()];
    for &ordinal in selected_layers {
        let Some(&spec) = param_layers.get(ordinal) else {
            return Err(Error::Config(format!(
                "layer index {} out of range ({} parameterized layers)",
                ordinal,
                param_layers.len()
            )));
        };
        let weights = net.layers()[spec].weights();
        let values: Vec<f64> = match criterion {
            SelectionCriterion::LargeFinal => weights.iter().map(|w| w.abs()).collect(),
            SelectionCriterion::MagnitudeIncrease => {
                let snap = net.init_snapshot(spec).ok_or(Error::MissingSnapshot)?;
                weights
                    .iter()
                    .zip(&snap.weight)
                    .map(|(w, w0)| w.abs() - w0.abs())
                    .collect()
            }
        };
        let mut order: Vec<usize> = (0..values.len()).collect();
        match side {
            SelectionSide::Smallest => {
                order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)))
            }
            SelectionSide::Largest => {
                order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)))
            }
        }
        let keep_count = (q * values.len() as f64).floor() as usize;
        let mut flags = vec![false; values.len()];
        for &i in order.iter().take(keep_count) {
            flags[i] = true;
        }
        kept[ordinal] = Some(flags);
    }
    let mut layers = selected_layers.to_vec();
    layers.sort_unstable();
    layers.dedup();
    Ok(EdgeMask {
        criterion,
        q,
        selected_layers: layers,
        kept,
    })
}

/// Keep the under-optimized (smallest-criterion) q-fraction per layer.
pub fn select_under_optimized(
    net: &Network,
    q: f64,
    selected_layers: &[usize],
    criterion: SelectionCriterion,
) -> Result<EdgeMask> {
    select_edges(net, q, selected_layers, criterion, SelectionSide::Smallest)
}

/// Restrict a graph to the mask: edges of unselected layers disappear, edges
/// of selected layers survive iff their parameter was kept.
pub fn apply_mask(graph: &InducedGraph, mask: &EdgeMask) -> InducedGraph {
    InducedGraph {
        vertex_count: graph.vertex_count,
        layer_offsets: graph.layer_offsets.clone(),
        edges: graph
            .edges
            .iter()
            .filter(|e| mask.is_kept(e.layer, e.param))
            .copied()
            .collect(),
    }
}

/// Fixed-length vector of the masked graph's edge weights in canonical
/// (layer, destination, source) order; kept-but-inactive edges contribute
/// zeros, so the length depends only on the mask.
pub fn raw_graph_features(graph: &InducedGraph, mask: &EdgeMask) -> Vec<f64> {
    graph
        .edges
        .iter()
        .filter(|e| mask.is_kept(e.layer, e.param))
        .map(|e| e.weight)
        .collect()
}

/// The active subgraph: edges whose induced weight is strictly positive.
///
/// A ReLU-dead source neuron (or an exactly-zero parameter) carries no
/// information flow; the diagram pipeline summarizes only the flow that
/// exists, so the graph structure itself varies with the input. Raw-graph
/// feature vectors keep the zero entries instead (their length must not
/// depend on the input).
pub fn positive_subgraph(graph: &InducedGraph) -> InducedGraph {
    InducedGraph {
        vertex_count: graph.vertex_count,
        layer_offsets: graph.layer_offsets.clone(),
        edges: graph
            .edges
            .iter()
            .filter(|e| e.weight > 0.0)
            .copied()
            .collect(),
    }
}

/// Dump a graph as text: a header with the layer offsets, then one
/// `u v weight` line per edge.
pub fn dump_graph(graph: &InducedGraph) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# vertices {}", graph.vertex_count);
    let offsets: Vec<String> = graph.layer_offsets.iter().map(|o| o.to_string()).collect();
    let _ = writeln!(out, "# layer_offsets {}", offsets.join(" "));
    for e in &graph.edges {
        let _ = writeln!(out, "{} {} {}", e.u, e.v, e.weight);
    }
    out
}
