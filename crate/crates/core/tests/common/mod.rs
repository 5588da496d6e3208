//! Shared oracles for the integration suites. Everything here recomputes
//! results by routes independent of the library internals it checks.

#![allow(dead_code)]

use topodetect::graph::{GraphEdge, InducedGraph};

/// Bare weighted graph for persistence checks; layer/param are meaningless.
pub fn bare_graph(vertex_count: usize, edges: &[(usize, usize, f64)]) -> InducedGraph {
    InducedGraph {
        vertex_count,
        layer_offsets: vec![0],
        edges: edges
            .iter()
            .map(|&(u, v, weight)| GraphEdge {
                u,
                v,
                weight,
                layer: 0,
                param: 0,
            })
            .collect(),
    }
}

/// Brute-force 0-dimensional persistence: rebuild connected components from
/// scratch after every edge insertion and track births/deaths by comparing
/// component vertex sets. Quadratic and slow, which is the point.
pub fn oracle_pd0(vertex_count: usize, edges: &[(usize, usize, f64)]) -> Vec<(f64, f64)> {
    let mut order: Vec<(f64, usize, usize)> =
        edges.iter().map(|&(u, v, w)| (-w, u, v)).collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

    let mut inserted: Vec<(usize, usize)> = Vec::new();
    // Live components as (sorted vertex list, birth value).
    let mut live: Vec<(Vec<usize>, f64)> = Vec::new();
    let mut points = Vec::new();
    for (value, u, v) in order {
        inserted.push((u, v));
        // Recompute the components of everything inserted so far.
        let mut comp_id = vec![usize::MAX; vertex_count];
        let mut comps: Vec<Vec<usize>> = Vec::new();
        for &(a, b) in &inserted {
            match (comp_id[a], comp_id[b]) {
                (usize::MAX, usize::MAX) => {
                    comp_id[a] = comps.len();
                    comp_id[b] = comps.len();
                    comps.push(if a == b { vec![a] } else { vec![a, b] });
                }
                (ca, usize::MAX) => {
                    comp_id[b] = ca;
                    comps[ca].push(b);
                }
                (usize::MAX, cb) => {
                    comp_id[a] = cb;
                    comps[cb].push(a);
                }
                (ca, cb) if ca != cb => {
                    let moved = std::mem::take(&mut comps[cb]);
                    for &m in &moved {
                        comp_id[m] = ca;
                    }
                    comps[ca].extend(moved);
                }
                _ => {}
            }
        }
        let comps: Vec<Vec<usize>> = comps.into_iter().filter(|c| !c.is_empty()).collect();

        let mut new_live = Vec::new();
        for comp in comps {
            let overlapping: Vec<&(Vec<usize>, f64)> = live
                .iter()
                .filter(|(set, _)| set.iter().any(|x| comp.contains(x)))
                .collect();
            match overlapping.len() {
                0 => new_live.push((comp, value)),
                1 => new_live.push((comp, overlapping[0].1)),
                _ => {
                    // Elder rule with the min-vertex tie break.
                    let survivor = overlapping
                        .iter()
                        .min_by(|a, b| {
                            a.1.total_cmp(&b.1)
                                .then(a.0.iter().min().cmp(&b.0.iter().min()))
                        })
                        .unwrap();
                    for other in &overlapping {
                        if !std::ptr::eq(*other, *survivor) {
                            points.push((other.1, value));
                        }
                    }
                    new_live.push((comp, survivor.1));
                }
            }
        }
        live = new_live;
    }
    for (_, birth) in live {
        points.push((birth, f64::INFINITY));
    }
    points.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    points
}

/// Straight-line sliced-Wasserstein reference: explicit angle loop, diagonal
/// augmentation, fresh sorting per direction.
pub fn oracle_sw(a: &[(f64, f64)], b: &[(f64, f64)], m: usize) -> f64 {
    let mut acc = 0.0;
    for i in 0..m {
        let theta =
            -std::f64::consts::PI / 2.0 + (i as f64) * std::f64::consts::PI / (m as f64);
        let mut proj_a = Vec::new();
        for p in a {
            proj_a.push(p.0 * theta.cos() + p.1 * theta.sin());
        }
        for p in b {
            let t = (p.0 + p.1) / 2.0;
            proj_a.push(t * theta.cos() + t * theta.sin());
        }
        let mut proj_b = Vec::new();
        for p in b {
            proj_b.push(p.0 * theta.cos() + p.1 * theta.sin());
        }
        for p in a {
            let t = (p.0 + p.1) / 2.0;
            proj_b.push(t * theta.cos() + t * theta.sin());
        }
        proj_a.sort_by(|x, y| x.partial_cmp(y).unwrap());
        proj_b.sort_by(|x, y| x.partial_cmp(y).unwrap());
        let mut dir_sum = 0.0;
        for k in 0..proj_a.len() {
            dir_sum += (proj_a[k] - proj_b[k]).abs();
        }
        acc += dir_sum;
    }
    acc / m as f64
}

/// Welch two-sample t statistic and two-sided p-value via the t distribution.
pub fn welch_test(a: &[f64], b: &[f64]) -> (f64, f64) {
    use statrs::distribution::{ContinuousCDF, StudentsT};
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let var = |v: &[f64], mu: f64| {
        v.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / (v.len() - 1) as f64
    };
    let (ma, mb) = (mean(a), mean(b));
    let (va, vb) = (var(a, ma), var(b, mb));
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let se2 = va / na + vb / nb;
    let t = (ma - mb) / se2.sqrt();
    let df = se2 * se2
        / ((va / na) * (va / na) / (na - 1.0) + (vb / nb) * (vb / nb) / (nb - 1.0));
    let dist = StudentsT::new(0.0, 1.0, df).expect("valid dof");
    let p = 2.0 * (1.0 - dist.cdf(t.abs()));
    (t, p)
}
