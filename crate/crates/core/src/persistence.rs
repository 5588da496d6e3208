//! 0-dimensional persistent homology of weighted graphs.
//!
//! Edges enter the filtration at value -|w|, strongest links first. A
//! connected component is born when its first edge appears (isolated vertices
//! carry nothing); when two components merge, the younger one dies and leaves
//! a (birth, death) point; components that never merge leave (birth, +inf).
//! Ties are fully deterministic: equal filtration values process in (u, v)
//! order, and equal-birth merges kill the component whose smallest vertex
//! index is larger.

use std::fmt::Write as _;

use crate::graph::InducedGraph;
use crate::{Error, Result};

/// Multiset of (birth, death) pairs; death may be `f64::INFINITY`.
#[derive(Debug, Clone, PartialEq)]
pub struct PersistenceDiagram {
    pub points: Vec<(f64, f64)>,
}

impl PersistenceDiagram {
    pub fn new(mut points: Vec<(f64, f64)>) -> Self {
        points.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
        Self { points }
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Point counts used by the simple count-based detectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PdStats {
    pub total_points: usize,
    pub infinite_points: usize,
}

/// Union-find keyed by component birth; the elder root always survives a
/// merge.
struct Components {
    parent: Vec<usize>,
    /// For roots: birth value of the component, if any edge reached it yet.
    birth: Vec<Option<f64>>,
    /// For roots: smallest vertex index in the component (the tie-break
    /// representative).
    min_vertex: Vec<usize>,
}

impl Components {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            birth: vec![None; n],
            min_vertex: (0..n).collect(),
        }
    }

    fn find(&mut self, v: usize) -> usize {
        let mut root = v;
        while self.parent[root] != root {
            root = self.parent[root];
        }
        let mut cur = v;
        while self.parent[cur] != root {
            let next = self.parent[cur];
            self.parent[cur] = root;
            cur = next;
        }
        root
    }
}

/// 0-dimensional persistence diagram of a weighted graph under the -|w|
/// filtration.
pub fn pd0(graph: &InducedGraph) -> Result<PersistenceDiagram> {
    if let Some(bad) = graph.edges.iter().find(|e| e.weight < 0.0) {
        return Err(Error::Config(format!(
            "induced edge weights must be nonnegative, got {} on ({}, {})",
            bad.weight, bad.u, bad.v
        )));
    }
    let mut order: Vec<(f64, usize, usize)> = graph
        .edges
        .iter()
        .map(|e| (-e.weight, e.u, e.v))
        .collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

    let mut uf = Components::new(graph.vertex_count);
    let mut points = Vec::new();
    for (value, u, v) in order {
        let ru = uf.find(u);
        let rv = uf.find(v);
        if ru == rv {
            continue; // edge inside an existing component
        }
        match (uf.birth[ru], uf.birth[rv]) {
            (None, None) => {
                // First edge of a fresh component.
                uf.parent[rv] = ru;
                uf.birth[ru] = Some(value);
                uf.min_vertex[ru] = uf.min_vertex[ru].min(uf.min_vertex[rv]);
            }
            (Some(_), None) => {
                uf.parent[rv] = ru;
                uf.min_vertex[ru] = uf.min_vertex[ru].min(uf.min_vertex[rv]);
            }
            (None, Some(_)) => {
                uf.parent[ru] = rv;
                uf.min_vertex[rv] = uf.min_vertex[rv].min(uf.min_vertex[ru]);
            }
            (Some(bu), Some(bv)) => {
                // Elder rule: the younger component dies here. On equal
                // births the larger representative dies.
                let (survivor, loser, loser_birth) = if bu < bv
                    || (bu == bv && uf.min_vertex[ru] < uf.min_vertex[rv])
                {
                    (ru, rv, bv)
                } else {
                    (rv, ru, bu)
                };
                points.push((loser_birth, value));
                uf.parent[loser] = survivor;
                uf.min_vertex[survivor] =
                    uf.min_vertex[survivor].min(uf.min_vertex[loser]);
            }
        }
    }
    for v in 0..graph.vertex_count {
        if uf.parent[v] == v {
            if let Some(b) = uf.birth[v] {
                points.push((b, f64::INFINITY));
            }
        }
    }
    Ok(PersistenceDiagram::new(points))
}

/// Exact point counts of a diagram.
pub fn pd_stats(pd: &PersistenceDiagram) -> PdStats {
    PdStats {
        total_points: pd.points.len(),
        infinite_points: pd
            .points
            .iter()
            .filter(|(_, d)| d.is_infinite())
            .count(),
    }
}

/// Render as CSV, one `birth,death` line per point with `inf` for survivors.
pub fn diagram_to_csv(pd: &PersistenceDiagram) -> String {
    let mut out = String::from("birth,death\n");
    for (b, d) in &pd.points {
        if d.is_infinite() {
            let _ = writeln!(out, "{},inf", b);
        } else {
            let _ = writeln!(out, "{},{}", b, d);
        }
    }
    out
}

/// Parse the CSV form back into a diagram.
pub fn diagram_from_csv(text: &str) -> Result<PersistenceDiagram> {
    let mut points = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 && line == "birth,death" {
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let (b, d) = line.split_once(',').ok_or_else(|| Error::Parse {
            offset: i,
            message: format!("expected 'birth,death', got {:?}", line),
        })?;
        let birth: f64 = b.trim().parse().map_err(|_| Error::Parse {
            offset: i,
            message: format!("bad birth value {:?}", b),
        })?;
        let death: f64 = if d.trim() == "inf" {
            f64::INFINITY
        } else {
            d.trim().parse().map_err(|_| Error::Parse {
                offset: i,
                message: format!("bad death value {:?}", d),
            })?
        };
        points.push((birth, death));
    }
    Ok(PersistenceDiagram::new(points))
}
