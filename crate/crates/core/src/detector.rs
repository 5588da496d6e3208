//! Kernel detectors and their evaluation: a one-class SVM fit on clean data
//! only, a binary soft-margin SVM for the supervised setting, rank-statistic
//! AUC, and bootstrap confidence intervals.
//!
//! Score polarity is fixed across detectors: higher means more clean.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::kernels::GramMatrix;
use crate::{Error, Result};

const KKT_TOL: f64 = 1e-6;
const MAX_ITER: usize = 1_000_000;
const TAU: f64 = 1e-12;

/// One-class SVM in the nu-parameterized dual: minimize (1/2) a'Ka subject to
/// 0 <= a_i <= 1/(nu n) and sum a = 1. Decision value for a point x is
/// sum_i a_i k(x_i, x) - rho.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OneClassModel {
    pub alphas: Vec<f64>,
    pub rho: f64,
    pub nu: f64,
}

impl OneClassModel {
    /// Score evaluation points given their kernel values against the training
    /// set (rows = evaluation points, cols = training points).
    pub fn score(&self, cross: &GramMatrix) -> Result<Vec<f64>> {
        if cross.col_ids.len() != self.alphas.len() {
            return Err(Error::Shape {
                expected: format!("{} kernel columns", self.alphas.len()),
                got: format!("{}", cross.col_ids.len()),
            });
        }
        Ok(cross
            .values
            .iter()
            .map(|row| {
                row.iter()
                    .zip(&self.alphas)
                    .map(|(k, a)| k * a)
                    .sum::<f64>()
                    - self.rho
            })
            .collect())
    }
}

/// Fit the one-class dual by coordinate ascent on maximal-violation pairs.
pub fn fit_one_class(gram: &GramMatrix, nu: f64) -> Result<OneClassModel> {
    if !gram.is_square() {
        return Err(Error::Shape {
            expected: "square gram matrix".into(),
            got: format!("{}x{}", gram.row_ids.len(), gram.col_ids.len()),
        });
    }
    if !(0.0 < nu && nu < 1.0) {
        return Err(Error::Config(format!("nu must lie in (0, 1), got {}", nu)));
    }
    let n = gram.row_ids.len();
    if n == 0 {
        return Err(Error::Config("empty training set".into()));
    }
    let k = &gram.values;
    let cap = 1.0 / (nu * n as f64);

    // Feasible start: fill the first floor(nu n) coordinates to the cap and
    // park the remainder on the next one.
    let mut alphas = vec![0.0; n];
    let full = (nu * n as f64).floor() as usize;
    for a in alphas.iter_mut().take(full.min(n)) {
        *a = cap;
    }
    let remainder = 1.0 - cap * full.min(n) as f64;
    if remainder > 0.0 && full < n {
        alphas[full] = remainder;
    }

    // Gradient of the objective: g = K alpha.
    let mut grad: Vec<f64> = (0..n)
        .map(|i| (0..n).map(|j| k[i][j] * alphas[j]).sum())
        .collect();

    let mut residual = f64::INFINITY;
    for _ in 0..MAX_ITER {
        // Move mass from the worst (largest gradient, positive alpha) to the
        // best (smallest gradient, below the cap).
        let mut i_best = usize::MAX;
        let mut j_worst = usize::MAX;
        for t in 0..n {
            if alphas[t] < cap - 1e-15
                && (i_best == usize::MAX || grad[t] < grad[i_best])
            {
                i_best = t;
            }
            if alphas[t] > 1e-15 && (j_worst == usize::MAX || grad[t] > grad[j_worst]) {
                j_worst = t;
            }
        }
        if i_best == usize::MAX || j_worst == usize::MAX {
            residual = 0.0;
            break;
        }
        residual = grad[j_worst] - grad[i_best];
        if residual <= KKT_TOL {
            break;
        }
        let eta = (k[i_best][i_best] + k[j_worst][j_worst] - 2.0 * k[i_best][j_worst]).max(TAU);
        let delta = (residual / eta)
            .min(cap - alphas[i_best])
            .min(alphas[j_worst]);
        alphas[i_best] += delta;
        alphas[j_worst] -= delta;
        for t in 0..n {
            grad[t] += delta * (k[t][i_best] - k[t][j_worst]);
        }
    }
    if residual > KKT_TOL {
        return Err(Error::Convergence {
            iterations: MAX_ITER,
            residual,
        });
    }

    // Normalize exactly; coordinate moves conserve the sum up to roundoff.
    let sum: f64 = alphas.iter().sum();
    for a in &mut alphas {
        *a /= sum;
    }

    // rho from the free support vectors, falling back to the violation
    // mid-point when every alpha sits on a bound.
    let free: Vec<usize> = (0..n)
        .filter(|&t| alphas[t] > 1e-10 && alphas[t] < cap - 1e-10)
        .collect();
    let rho = if free.is_empty() {
        let upper = (0..n)
            .filter(|&t| alphas[t] > 1e-15)
            .map(|t| grad[t])
            .fold(f64::NEG_INFINITY, f64::max);
        let lower = (0..n)
            .filter(|&t| alphas[t] < cap - 1e-15)
            .map(|t| grad[t])
            .fold(f64::INFINITY, f64::min);
        0.5 * (upper + lower)
    } else {
        free.iter().map(|&t| grad[t]).sum::<f64>() / free.len() as f64
    };
    Ok(OneClassModel { alphas, rho, nu })
}

/// Binary kernel SVM: alpha_i y_i coefficients plus bias. Positive class is
/// "clean".
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BinaryModel {
    pub coef: Vec<f64>,
    pub bias: f64,
    pub c: f64,
}

impl BinaryModel {
    pub fn score(&self, cross: &GramMatrix) -> Result<Vec<f64>> {
        if cross.col_ids.len() != self.coef.len() {
            return Err(Error::Shape {
                expected: format!("{} kernel columns", self.coef.len()),
                got: format!("{}", cross.col_ids.len()),
            });
        }
        Ok(cross
            .values
            .iter()
            .map(|row| {
                row.iter().zip(&self.coef).map(|(k, a)| k * a).sum::<f64>() + self.bias
            })
            .collect())
    }
}

/// Soft-margin kernel SVM via sequential minimal optimization with
/// maximal-violating-pair selection. `labels[i]` is true for the positive
/// (clean) class.
pub fn fit_binary(gram: &GramMatrix, labels: &[bool], c: f64) -> Result<BinaryModel> {
    if !gram.is_square() || gram.row_ids.len() != labels.len() {
        return Err(Error::Shape {
            expected: "square gram matching labels".into(),
            got: format!(
                "{}x{} gram, {} labels",
                gram.row_ids.len(),
                gram.col_ids.len(),
                labels.len()
            ),
        });
    }
    if c <= 0.0 {
        return Err(Error::Config("C must be positive".into()));
    }
    if labels.iter().all(|&l| l) || labels.iter().all(|&l| !l) {
        return Err(Error::DegenerateLabels);
    }
    let n = labels.len();
    let y: Vec<f64> = labels.iter().map(|&l| if l { 1.0 } else { -1.0 }).collect();
    let k = &gram.values;
    let q = |i: usize, j: usize| y[i] * y[j] * k[i][j];

    let mut alphas = vec![0.0; n];
    // Gradient of (1/2) a'Qa - e'a starts at -1.
    let mut grad = vec![-1.0; n];

    let in_up = |t: usize, a: &[f64]| (y[t] > 0.0 && a[t] < c) || (y[t] < 0.0 && a[t] > 0.0);
    let in_low = |t: usize, a: &[f64]| (y[t] > 0.0 && a[t] > 0.0) || (y[t] < 0.0 && a[t] < c);

    let mut residual = f64::INFINITY;
    for _ in 0..MAX_ITER {
        let mut i = usize::MAX;
        let mut m_up = f64::NEG_INFINITY;
        let mut j = usize::MAX;
        let mut m_low = f64::INFINITY;
        for t in 0..n {
            let v = -y[t] * grad[t];
            if in_up(t, &alphas) && v > m_up {
                m_up = v;
                i = t;
            }
            if in_low(t, &alphas) && v < m_low {
                m_low = v;
                j = t;
            }
        }
        residual = m_up - m_low;
        if i == usize::MAX || j == usize::MAX || residual <= KKT_TOL {
            break;
        }

        let old_i = alphas[i];
        let old_j = alphas[j];
        // Curvature along the feasible direction is the kernel-space squared
        // distance in both branches.
        let quad = (k[i][i] + k[j][j] - 2.0 * k[i][j]).max(TAU);
        if y[i] != y[j] {
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alphas[i] - alphas[j];
            alphas[i] += delta;
            alphas[j] += delta;
            if diff > 0.0 {
                if alphas[j] < 0.0 {
                    alphas[j] = 0.0;
                    alphas[i] = diff;
                }
            } else if alphas[i] < 0.0 {
                alphas[i] = 0.0;
                alphas[j] = -diff;
            }
            if diff > 0.0 {
                if alphas[i] > c {
                    alphas[i] = c;
                    alphas[j] = c - diff;
                }
            } else if alphas[j] > c {
                alphas[j] = c;
                alphas[i] = c + diff;
            }
        } else {
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alphas[i] + alphas[j];
            alphas[i] -= delta;
            alphas[j] += delta;
            if sum > c {
                if alphas[i] > c {
                    alphas[i] = c;
                    alphas[j] = sum - c;
                }
            } else if alphas[j] < 0.0 {
                alphas[j] = 0.0;
                alphas[i] = sum;
            }
            if sum > c {
                if alphas[j] > c {
                    alphas[j] = c;
                    alphas[i] = sum - c;
                }
            } else if alphas[i] < 0.0 {
                alphas[i] = 0.0;
                alphas[j] = sum;
            }
        }
        let di = alphas[i] - old_i;
        let dj = alphas[j] - old_j;
        for t in 0..n {
            grad[t] += q(t, i) * di + q(t, j) * dj;
        }
    }
    if residual > KKT_TOL {
        return Err(Error::Convergence {
            iterations: MAX_ITER,
            residual,
        });
    }

    // Bias from free support vectors, else the violation mid-point.
    let free: Vec<usize> = (0..n)
        .filter(|&t| alphas[t] > 1e-10 && alphas[t] < c - 1e-10)
        .collect();
    let bias = if free.is_empty() {
        let m_up = (0..n)
            .filter(|&t| in_up(t, &alphas))
            .map(|t| -y[t] * grad[t])
            .fold(f64::NEG_INFINITY, f64::max);
        let m_low = (0..n)
            .filter(|&t| in_low(t, &alphas))
            .map(|t| -y[t] * grad[t])
            .fold(f64::INFINITY, f64::min);
        0.5 * (m_up + m_low)
    } else {
        free.iter().map(|&t| -y[t] * grad[t]).sum::<f64>() / free.len() as f64
    };
    let coef: Vec<f64> = alphas.iter().zip(&y).map(|(a, yi)| a * yi).collect();
    Ok(BinaryModel { coef, bias, c })
}

/// Rank-statistic AUC: the probability a random positive (clean) score beats
/// a random negative one, ties counted half.
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::Shape {
            expected: format!("{} labels", scores.len()),
            got: format!("{}", labels.len()),
        });
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::DegenerateLabels);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Average ranks within tie groups (1-based).
    let mut ranks = vec![0.0; scores.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let avg = (i + 1 + j + 1) as f64 / 2.0;
        for &idx in &order[i..=j] {
            ranks[idx] = avg;
        }
        i = j + 1;
    }
    let rank_sum_pos: f64 = labels
        .iter()
        .zip(&ranks)
        .filter(|(&l, _)| l)
        .map(|(_, r)| r)
        .sum();
    let u = rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

/// Bootstrap 80% confidence interval for the AUC: B stratified resamples of
/// size n/2, interval [2 auc - c90, 2 auc - c10].
pub fn bootstrap_ci(
    scores: &[f64],
    labels: &[bool],
    b: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    let n = scores.len();
    if n < 10 {
        return Err(Error::Config(format!(
            "need at least 10 samples for the bootstrap, got {}",
            n
        )));
    }
    let point = auc(scores, labels)?;
    let pos_idx: Vec<usize> = (0..n).filter(|&i| labels[i]).collect();
    let neg_idx: Vec<usize> = (0..n).filter(|&i| !labels[i]).collect();
    let half = n / 2;
    // Proportional stratification.
    let k_pos = pos_idx.len() * half / n;
    let k_neg = half - k_pos;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut boot = Vec::with_capacity(b);
    for _ in 0..b {
        let mut replicate = None;
        for _attempt in 0..10 {
            let mut s = Vec::with_capacity(half);
            let mut l = Vec::with_capacity(half);
            for _ in 0..k_pos {
                let i = pos_idx[rng.random_range(0..pos_idx.len())];
                s.push(scores[i]);
                l.push(true);
            }
            for _ in 0..k_neg {
                let i = neg_idx[rng.random_range(0..neg_idx.len())];
                s.push(scores[i]);
                l.push(false);
            }
            if l.iter().any(|&x| x) && l.iter().any(|&x| !x) {
                replicate = Some(auc(&s, &l)?);
                break;
            }
        }
        match replicate {
            Some(a) => boot.push(a),
            None => return Err(Error::DegenerateLabels),
        }
    }
    boot.sort_by(f64::total_cmp);
    let c10 = percentile(&boot, 10.0);
    let c90 = percentile(&boot, 90.0);
    Ok((2.0 * point - c90, 2.0 * point - c10))
}

/// Linear-interpolation percentile of sorted data.
fn percentile(sorted: &[f64], p: f64) -> f64 {
    let pos = p / 100.0 * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] * (1.0 - frac) + sorted[hi] * frac
}

/// Evaluation summary: AUC with its bootstrap interval, raw scores, and an
/// echo of the configuration that produced the run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DetectionReport {
    pub auc: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// Decision value per evaluated input (higher = more clean).
    pub scores: Vec<f64>,
    /// True where the evaluated input was clean.
    pub labels: Vec<bool>,
    pub config: serde_json::Value,
}
