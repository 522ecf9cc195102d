//! Brute-force references for cross-checking `semilabel-core`.
//!
//! Nothing here shares code with the core crate. Everything is written for
//! clarity over speed and is only meant for tiny inputs.

use std::collections::{BTreeMap, BTreeSet};

/// Small self-contained PRNG (xorshift64*), so oracle runs don't share RNG code with the core.
#[derive(Debug, Clone)]
pub struct XorShift(u64);

impl XorShift {
    pub fn new(seed: u64) -> Self {
        Self(seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) | 1)
    }

    pub fn next_u64(&mut self) -> u64 {
        let mut x = self.0;
        x ^= x >> 12;
        x ^= x << 25;
        x ^= x >> 27;
        self.0 = x;
        x.wrapping_mul(0x2545_F491_4F6C_DD1D)
    }

    /// Uniform in [0, 1).
    pub fn unit(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    pub fn below(&mut self, n: usize) -> usize {
        (self.unit() * n as f64) as usize % n.max(1)
    }
}

fn sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    sq(a, b).sqrt()
}

/// Within-cluster sum of squared distances to the cluster mean.
pub fn sse(points: &[Vec<f64>], labels: &[usize], k: usize) -> f64 {
    let d = points[0].len();
    let mut total = 0.0;
    for c in 0..k {
        let members: Vec<&Vec<f64>> = points.iter().zip(labels).filter(|(_, &l)| l == c).map(|(p, _)| p).collect();
        if members.is_empty() {
            continue;
        }
        let mut mean = vec![0.0; d];
        for p in &members {
            for i in 0..d {
                mean[i] += p[i];
            }
        }
        mean.iter_mut().for_each(|m| *m /= members.len() as f64);
        total += members.iter().map(|p| sq(p, &mean)).sum::<f64>();
    }
    total
}

/// `(1/2) Σ_c Σ_{i,j in c} ||x_i - x_j||^2`, the raw pairwise form.
pub fn pairwise_wgss(points: &[Vec<f64>], labels: &[usize]) -> f64 {
    let mut w = 0.0;
    for i in 0..points.len() {
        for j in 0..points.len() {
            if labels[i] == labels[j] {
                w += sq(&points[i], &points[j]);
            }
        }
    }
    w / 2.0
}

/// Minimum SSE over every assignment of the points to exactly `k` non-empty clusters.
pub fn exhaustive_min_sse(points: &[Vec<f64>], k: usize) -> f64 {
    let n = points.len();
    assert!(n <= 14 && k >= 1 && k <= n, "exhaustive search is for tiny inputs");
    let mut labels = vec![0usize; n];
    let mut best = f64::INFINITY;
    // Restricted growth strings enumerate each set partition exactly once.
    fn rec(i: usize, used: usize, k: usize, labels: &mut Vec<usize>, points: &[Vec<f64>], best: &mut f64) {
        let n = labels.len();
        if n - i < k - used {
            return;
        }
        if i == n {
            if used == k {
                let s = sse(points, labels, k);
                if s < *best {
                    *best = s;
                }
            }
            return;
        }
        for c in 0..=used.min(k - 1) {
            labels[i] = c;
            rec(i + 1, used.max(c + 1), k, labels, points, best);
        }
    }
    rec(0, 0, k, &mut labels, points, &mut best);
    best
}

/// Textbook silhouette: per-point `(b - a) / max(a, b)`, singletons score 0.
pub fn naive_silhouette(points: &[Vec<f64>], labels: &[usize]) -> (f64, Vec<f64>) {
    let n = points.len();
    let clusters: BTreeSet<usize> = labels.iter().copied().collect();
    let mut scores = Vec::with_capacity(n);
    for i in 0..n {
        let own = labels[i];
        let own_size = labels.iter().filter(|&&l| l == own).count();
        if own_size == 1 {
            scores.push(0.0);
            continue;
        }
        let mut a = 0.0;
        for j in 0..n {
            if j != i && labels[j] == own {
                a += dist(&points[i], &points[j]);
            }
        }
        a /= (own_size - 1) as f64;
        let mut b = f64::INFINITY;
        for &c in &clusters {
            if c == own {
                continue;
            }
            let mut s = 0.0;
            let mut m = 0;
            for j in 0..n {
                if labels[j] == c {
                    s += dist(&points[i], &points[j]);
                    m += 1;
                }
            }
            b = b.min(s / m as f64);
        }
        let denom = a.max(b);
        scores.push(if denom == 0.0 { 0.0 } else { (b - a) / denom });
    }
    let mean = scores.iter().sum::<f64>() / n as f64;
    (mean, scores)
}

/// Fraction of each point's `k` nearest neighbors (Euclidean, excluding itself) sharing its label.
pub fn knn_purity(coords: &[Vec<f64>], labels: &[usize], k: usize) -> f64 {
    let n = coords.len();
    let mut hits = 0usize;
    for i in 0..n {
        let mut d: Vec<(f64, usize)> = (0..n).filter(|&j| j != i).map(|j| (dist(&coords[i], &coords[j]), j)).collect();
        d.sort_by(|a, b| a.0.total_cmp(&b.0));
        hits += d.iter().take(k).filter(|(_, j)| labels[*j] == labels[i]).count();
    }
    hits as f64 / (n * k) as f64
}

/// Central finite-difference gradient of `f` at `x`.
pub fn central_difference<F: Fn(&[f64]) -> f64>(f: F, x: &[f64], eps: f64) -> Vec<f64> {
    let mut g = Vec::with_capacity(x.len());
    let mut xp = x.to_vec();
    for i in 0..x.len() {
        let orig = xp[i];
        xp[i] = orig + eps;
        let fp = f(&xp);
        xp[i] = orig - eps;
        let fm = f(&xp);
        xp[i] = orig;
        g.push((fp - fm) / (2.0 * eps));
    }
    g
}

/// `||a - b|| / max(||a||, ||b||)`, 0 when both vanish.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    let d = na.max(nb);
    if d == 0.0 {
        0.0
    } else {
        diff / d
    }
}

/// CBOW trained with the exact softmax over the whole vocabulary.
///
/// Hidden = mean of context input vectors; loss = `-log softmax(W_out h)[target]`.
/// Plain SGD with exact gradients, including the `1/|context|` factor.
pub struct SoftmaxCbow {
    pub vocab: Vec<String>,
    pub input: Vec<Vec<f64>>,
}

impl SoftmaxCbow {
    pub fn train(docs: &[Vec<String>], dim: usize, window: usize, epochs: usize, lr: f64, seed: u64) -> Self {
        let vocab: Vec<String> = docs.iter().flatten().cloned().collect::<BTreeSet<_>>().into_iter().collect();
        let index: BTreeMap<&str, usize> = vocab.iter().enumerate().map(|(i, w)| (w.as_str(), i)).collect();
        let v = vocab.len();
        let mut rng = XorShift::new(seed);
        let mut input: Vec<Vec<f64>> = (0..v).map(|_| (0..dim).map(|_| (rng.unit() - 0.5) / dim as f64).collect()).collect();
        let mut output = vec![vec![0.0; dim]; v];
        let encoded: Vec<Vec<usize>> = docs.iter().map(|d| d.iter().map(|t| index[t.as_str()]).collect()).collect();
        let total_steps = (epochs * encoded.iter().map(Vec::len).sum::<usize>()).max(1) as f64;
        let mut step = 0usize;
        for _ in 0..epochs {
            for doc in &encoded {
                for t in 0..doc.len() {
                    let rate = lr * (1.0 - step as f64 / total_steps).max(1e-4);
                    step += 1;
                    let lo = t.saturating_sub(window);
                    let hi = (t + window + 1).min(doc.len());
                    let ctx: Vec<usize> = (lo..hi).filter(|&j| j != t).map(|j| doc[j]).collect();
                    if ctx.is_empty() {
                        continue;
                    }
                    let mut h = vec![0.0; dim];
                    for &c in &ctx {
                        for i in 0..dim {
                            h[i] += input[c][i] / ctx.len() as f64;
                        }
                    }
                    let scores: Vec<f64> = output.iter().map(|o| o.iter().zip(&h).map(|(a, b)| a * b).sum()).collect();
                    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
                    let z: f64 = exps.iter().sum();
                    let mut grad_h = vec![0.0; dim];
                    for j in 0..v {
                        let e = exps[j] / z - if j == doc[t] { 1.0 } else { 0.0 };
                        for i in 0..dim {
                            grad_h[i] += e * output[j][i];
                            output[j][i] -= rate * e * h[i];
                        }
                    }
                    for &c in &ctx {
                        for i in 0..dim {
                            input[c][i] -= rate * grad_h[i] / ctx.len() as f64;
                        }
                    }
                }
            }
        }
        Self { vocab, input }
    }

    /// Most cosine-similar other vocabulary word.
    pub fn top1(&self, word: &str) -> Option<&str> {
        let i = self.vocab.iter().position(|w| w == word)?;
        let cos = |a: &[f64], b: &[f64]| {
            let d: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
            d / (a.iter().map(|x| x * x).sum::<f64>().sqrt() * b.iter().map(|x| x * x).sum::<f64>().sqrt())
        };
        (0..self.vocab.len())
            .filter(|&j| j != i)
            .max_by(|&a, &b| cos(&self.input[i], &self.input[a]).total_cmp(&cos(&self.input[i], &self.input[b])))
            .map(|j| self.vocab[j].as_str())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exhaustive_finds_obvious_split() {
        let pts = vec![vec![0.0], vec![0.1], vec![10.0], vec![10.1]];
        assert!((exhaustive_min_sse(&pts, 2) - 0.01).abs() < 1e-12);
    }

    #[test]
    fn pairwise_form_scales_sse_by_cluster_size() {
        let pts = vec![vec![0.0], vec![2.0], vec![4.0]];
        let labels = [0, 0, 0];
        assert!((pairwise_wgss(&pts, &labels) - 3.0 * sse(&pts, &labels, 1)).abs() < 1e-12);
    }

    #[test]
    fn silhouette_of_coincident_pairs_is_one() {
        let pts = vec![vec![0.0, 0.0], vec![0.0, 0.0], vec![100.0, 0.0], vec![100.0, 0.0]];
        let (m, _) = naive_silhouette(&pts, &[0, 0, 1, 1]);
        assert!((m - 1.0).abs() < 1e-12);
    }

    #[test]
    fn central_difference_of_quadratic() {
        let g = central_difference(|x| x[0] * x[0] + 3.0 * x[1], &[2.0, 1.0], 1e-5);
        assert!(relative_error(&g, &[4.0, 3.0]) < 1e-8);
    }
}
