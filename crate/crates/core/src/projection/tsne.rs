use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{validate, ProjectionError};
use crate::linalg::sq_dist;
use crate::rng;

pub const MAX_TSNE_POINTS: usize = 5000;
const TSNE_STREAM: u64 = 0x75_4E;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TsneConfig {
    pub perplexity: f64,
    pub iters: usize,
    pub early_exaggeration: f64,
    pub exaggeration_iters: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for TsneConfig {
    fn default() -> Self {
        Self {
            perplexity: 30.0,
            iters: 1000,
            early_exaggeration: 12.0,
            exaggeration_iters: 250,
            learning_rate: 200.0,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TsneResult {
    pub coords: Vec<Vec<f64>>,
    /// `KL(P || Q)` after each iteration from the start of the guarded phase.
    pub kl_trace: Vec<f64>,
    /// First iteration of the guarded phase.
    pub guarded_from: usize,
    /// Steps shrunk or dropped because they would have raised the KL divergence.
    pub rejected_steps: usize,
}

/// Row-conditional Gaussian affinities `p_{j|i}`, each row's bandwidth found
/// by bisection so its entropy matches `ln(perplexity)`. Rows sum to 1.
pub fn conditional_probabilities(points: &[Vec<f64>], perplexity: f64) -> Vec<Vec<f64>> {
    let n = points.len();
    let target = perplexity.ln();
    (0..n)
        .into_par_iter()
        .map(|i| {
            let d: Vec<f64> = (0..n).map(|j| if i == j { 0.0 } else { sq_dist(&points[i], &points[j]) }).collect();
            let dmin = (0..n).filter(|&j| j != i).map(|j| d[j]).fold(f64::INFINITY, f64::min);
            let mut beta = 1.0;
            let (mut lo, mut hi) = (0.0, f64::INFINITY);
            let mut row = vec![0.0; n];
            for _ in 0..200 {
                let mut sum = 0.0;
                let mut weighted = 0.0;
                for j in 0..n {
                    if j == i {
                        row[j] = 0.0;
                        continue;
                    }
                    let shifted = d[j] - dmin;
                    let e = (-beta * shifted).exp();
                    row[j] = e;
                    sum += e;
                    weighted += shifted * e;
                }
                // H = ln(sum) + beta * E[d - dmin]
                let h = sum.ln() + beta * weighted / sum;
                row.iter_mut().for_each(|x| *x /= sum);
                let diff = h - target;
                if diff.abs() < 1e-10 {
                    break;
                }
                if diff > 0.0 {
                    lo = beta;
                    beta = if hi.is_finite() { (beta + hi) / 2.0 } else { beta * 2.0 };
                } else {
                    hi = beta;
                    beta = (beta + lo) / 2.0;
                }
            }
            let s: f64 = row.iter().sum();
            row.iter_mut().for_each(|x| *x /= s);
            row
        })
        .collect()
}

fn kl(p: &[f64], y: &[[f64; 2]]) -> f64 {
    let n = y.len();
    let mut z = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                z += 1.0 / (1.0 + d2(&y[i], &y[j]));
            }
        }
    }
    let mut kl = 0.0;
    for i in 0..n {
        for j in 0..n {
            let pij = p[i * n + j];
            if i != j && pij > 0.0 {
                let q = (1.0 / (1.0 + d2(&y[i], &y[j]))) / z;
                kl += pij * (pij / q.max(1e-300)).ln();
            }
        }
    }
    kl
}

#[inline]
fn d2(a: &[f64; 2], b: &[f64; 2]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    dx * dx + dy * dy
}

fn gradient(p: &[f64], y: &[[f64; 2]], exaggeration: f64, grad: &mut [[f64; 2]]) {
    let n = y.len();
    let mut num = vec![0.0; n * n];
    let mut z = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 1.0 / (1.0 + d2(&y[i], &y[j]));
            num[i * n + j] = v;
            num[j * n + i] = v;
            z += 2.0 * v;
        }
    }
    for i in 0..n {
        let mut g = [0.0; 2];
        for j in 0..n {
            if i == j {
                continue;
            }
            let w = num[i * n + j];
            let m = (exaggeration * p[i * n + j] - w / z) * w;
            g[0] += m * (y[i][0] - y[j][0]);
            g[1] += m * (y[i][1] - y[j][1]);
        }
        grad[i] = [4.0 * g[0], 4.0 * g[1]];
    }
}

fn center(y: &mut [[f64; 2]]) {
    let n = y.len() as f64;
    let mx = y.iter().map(|p| p[0]).sum::<f64>() / n;
    let my = y.iter().map(|p| p[1]).sum::<f64>() / n;
    for p in y.iter_mut() {
        p[0] -= mx;
        p[1] -= my;
    }
}

/// Exact t-SNE to two dimensions.
///
/// Gradient descent with momentum (0.5, then 0.8 once exaggeration ends) and
/// per-coordinate adaptive gains. From `max(exaggeration_iters, iters / 2)`
/// on, a step that would raise the KL divergence is retried with a halved
/// learning rate and no momentum, and dropped if that never helps, so the
/// recorded divergence is non-increasing there.
pub fn tsne(points: &[Vec<f64>], config: &TsneConfig) -> Result<TsneResult, ProjectionError> {
    validate(points, 4)?;
    let n = points.len();
    if n > MAX_TSNE_POINTS {
        return Err(ProjectionError::TooManyPoints { n });
    }
    if !(config.perplexity > 0.0 && config.perplexity < n as f64 / 3.0) {
        return Err(ProjectionError::Perplexity {
            perplexity: config.perplexity,
            n,
        });
    }
    let cond = conditional_probabilities(points, config.perplexity);
    let mut p = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            p[i * n + j] = ((cond[i][j] + cond[j][i]) / (2.0 * n as f64)).max(1e-12);
        }
        p[i * n + i] = 0.0;
    }

    let mut r = rng::stream(config.seed, TSNE_STREAM);
    let normal = Normal::new(0.0, 1e-4).expect("valid sigma");
    let mut y: Vec<[f64; 2]> = (0..n).map(|_| [normal.sample(&mut r), normal.sample(&mut r)]).collect();
    let mut update = vec![[0.0; 2]; n];
    let mut gains = vec![[1.0f64; 2]; n];
    let mut grad = vec![[0.0; 2]; n];
    let guarded_from = config.exaggeration_iters.max(config.iters / 2);
    let mut kl_trace = Vec::new();
    let mut rejected = 0;
    let mut current_kl = f64::NAN;

    for it in 0..config.iters {
        let exaggeration = if it < config.exaggeration_iters { config.early_exaggeration } else { 1.0 };
        let momentum = if it < config.exaggeration_iters { 0.5 } else { 0.8 };
        gradient(&p, &y, exaggeration, &mut grad);
        for i in 0..n {
            for d in 0..2 {
                let same_sign = (grad[i][d] > 0.0) == (update[i][d] > 0.0);
                gains[i][d] = if same_sign { gains[i][d] * 0.8 } else { gains[i][d] + 0.2 };
                gains[i][d] = gains[i][d].max(0.01);
            }
        }
        if it < guarded_from {
            for i in 0..n {
                for d in 0..2 {
                    update[i][d] = momentum * update[i][d] - config.learning_rate * gains[i][d] * grad[i][d];
                    y[i][d] += update[i][d];
                }
            }
            center(&mut y);
            continue;
        }
        if current_kl.is_nan() {
            current_kl = kl(&p, &y);
        }
        let mut candidate = y.clone();
        let mut cand_update = update.clone();
        for i in 0..n {
            for d in 0..2 {
                cand_update[i][d] = momentum * update[i][d] - config.learning_rate * gains[i][d] * grad[i][d];
                candidate[i][d] += cand_update[i][d];
            }
        }
        let mut cand_kl = kl(&p, &candidate);
        let mut lr = config.learning_rate;
        let mut tries = 0;
        while cand_kl > current_kl && tries < 30 {
            tries += 1;
            lr *= 0.5;
            for i in 0..n {
                for d in 0..2 {
                    cand_update[i][d] = -lr * grad[i][d];
                    candidate[i][d] = y[i][d] + cand_update[i][d];
                }
            }
            cand_kl = kl(&p, &candidate);
        }
        if tries > 0 {
            rejected += 1;
            gains.iter_mut().for_each(|g| *g = [1.0; 2]);
        }
        if cand_kl <= current_kl {
            y = candidate;
            update = cand_update;
            current_kl = cand_kl;
        } else {
            update.iter_mut().for_each(|u| *u = [0.0; 2]);
        }
        center(&mut y);
        kl_trace.push(current_kl);
    }
    Ok(TsneResult {
        coords: y.iter().map(|c| c.to_vec()).collect(),
        kl_trace,
        guarded_from,
        rejected_steps: rejected,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conditional_rows_sum_to_one_and_hit_perplexity() {
        let pts: Vec<Vec<f64>> = (0..40).map(|i| vec![(i as f64).sin() * 3.0, (i as f64 * 0.7).cos()]).collect();
        let cond = conditional_probabilities(&pts, 10.0);
        for (i, row) in cond.iter().enumerate() {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            assert_eq!(row[i], 0.0);
            let h: f64 = row.iter().filter(|&&p| p > 0.0).map(|p| -p * p.ln()).sum();
            assert!((h.exp() - 10.0).abs() < 1e-3, "row {i}: perplexity {}", h.exp());
        }
    }

    #[test]
    fn infeasible_arguments() {
        let pts: Vec<Vec<f64>> = (0..9).map(|i| vec![i as f64]).collect();
        assert!(matches!(tsne(&pts, &TsneConfig { perplexity: 3.0, ..Default::default() }), Err(ProjectionError::Perplexity { .. })));
        assert!(tsne(&pts[..2], &TsneConfig::default()).is_err());
    }

    #[test]
    fn fixed_seed_is_reproducible() {
        let pts: Vec<Vec<f64>> = (0..20).map(|i| vec![(i % 4) as f64 * 5.0, (i / 4) as f64]).collect();
        let cfg = TsneConfig { perplexity: 5.0, iters: 120, exaggeration_iters: 40, ..Default::default() };
        let a = tsne(&pts, &cfg).unwrap();
        let b = tsne(&pts, &cfg).unwrap();
        assert_eq!(a.coords, b.coords);
        assert!(a.kl_trace.windows(2).all(|w| w[1] <= w[0]));
    }
}
