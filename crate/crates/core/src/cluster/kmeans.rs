use std::collections::HashSet;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{pairwise_wgss, validate_points, ClusterError, ClusterModel};
use crate::linalg::sq_dist;
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeansConfig {
    pub k: usize,
    pub restarts: usize,
    pub max_iters: usize,
    /// Lloyd stops once no centroid moves farther than this.
    pub tol: f64,
    pub seed: u64,
    /// Follow Lloyd with single-point moves that strictly lower WGSS.
    pub local_moves: bool,
}

impl KMeansConfig {
    pub fn new(k: usize) -> Self {
        Self {
            k,
            restarts: 10,
            max_iters: 300,
            tol: 1e-6,
            seed: 1,
            local_moves: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct KMeansResult {
    pub model: ClusterModel,
    /// Cluster id per input point.
    pub labels: Vec<usize>,
    /// WGSS after every iteration, one trace per restart.
    pub traces: Vec<Vec<f64>>,
}

pub(crate) fn per_cluster_sse(points: &[Vec<f64>], labels: &[usize], k: usize) -> (Vec<f64>, Vec<usize>) {
    let centroids = means(points, labels, k);
    let mut sse = vec![0.0; k];
    let mut sizes = vec![0; k];
    for (p, &l) in points.iter().zip(labels) {
        sse[l] += sq_dist(p, &centroids[l]);
        sizes[l] += 1;
    }
    (sse, sizes)
}

/// Sum of squared distances of each point to its cluster mean.
pub fn wgss(points: &[Vec<f64>], labels: &[usize], k: usize) -> f64 {
    per_cluster_sse(points, labels, k).0.iter().sum()
}

fn means(points: &[Vec<f64>], labels: &[usize], k: usize) -> Vec<Vec<f64>> {
    let dim = points.first().map_or(0, Vec::len);
    let mut sums = vec![vec![0.0; dim]; k];
    let mut counts = vec![0usize; k];
    for (p, &l) in points.iter().zip(labels) {
        counts[l] += 1;
        for (s, x) in sums[l].iter_mut().zip(p) {
            *s += x;
        }
    }
    for (s, &c) in sums.iter_mut().zip(&counts) {
        if c > 0 {
            s.iter_mut().for_each(|x| *x /= c as f64);
        }
    }
    sums
}

fn key(p: &[f64]) -> Vec<u64> {
    // -0.0 and 0.0 are the same point.
    p.iter().map(|&x| (x + 0.0).to_bits()).collect()
}

fn nearest(p: &[f64], centroids: &[Vec<f64>]) -> usize {
    let mut best = 0;
    let mut bd = f64::INFINITY;
    for (c, m) in centroids.iter().enumerate() {
        let d = sq_dist(p, m);
        if d < bd {
            bd = d;
            best = c;
        }
    }
    best
}

/// Best-of-`restarts` k-means. Each restart starts from `k` distinct input
/// points chosen uniformly at random, runs Lloyd iterations, then (if
/// enabled) single-point moves. Restarts run in parallel on independent
/// seeded streams, so the result does not depend on scheduling.
pub fn kmeans(points: &[Vec<f64>], config: &KMeansConfig) -> Result<KMeansResult, ClusterError> {
    validate_points(points)?;
    if config.k == 0 {
        return Err(ClusterError::ZeroK);
    }
    if config.restarts == 0 {
        return Err(ClusterError::ZeroRestarts);
    }
    let mut seen = HashSet::new();
    let mut distinct = Vec::new();
    for (i, p) in points.iter().enumerate() {
        if seen.insert(key(p)) {
            distinct.push(i);
        }
    }
    if config.k > distinct.len() {
        return Err(ClusterError::TooManyClusters {
            k: config.k,
            distinct: distinct.len(),
        });
    }
    let runs: Vec<(Vec<usize>, Vec<f64>)> = (0..config.restarts)
        .into_par_iter()
        .map(|r| restart(points, &distinct, config, r as u64))
        .collect();
    let restart_wgss: Vec<f64> = runs.iter().map(|(_, t)| *t.last().expect("trace is never empty")).collect();
    let best = (0..runs.len())
        .min_by(|&a, &b| restart_wgss[a].total_cmp(&restart_wgss[b]).then(a.cmp(&b)))
        .expect("at least one restart");
    let labels = runs[best].0.clone();
    let k = config.k;
    let model = ClusterModel {
        k,
        centroids: means(points, &labels, k),
        wgss: wgss(points, &labels, k),
        pairwise_wgss: pairwise_wgss(points, &labels, k),
        restarts_used: config.restarts,
        seed: config.seed,
        restart_wgss,
    };
    Ok(KMeansResult {
        model,
        labels,
        traces: runs.into_iter().map(|(_, t)| t).collect(),
    })
}

fn restart(points: &[Vec<f64>], distinct: &[usize], config: &KMeansConfig, r: u64) -> (Vec<usize>, Vec<f64>) {
    let k = config.k;
    let mut rng = rng::stream(config.seed, r);
    let mut pool = distinct.to_vec();
    pool.shuffle(&mut rng);
    let mut centroids: Vec<Vec<f64>> = pool[..k].iter().map(|&i| points[i].clone()).collect();
    let mut labels = vec![0usize; points.len()];
    let mut trace = Vec::new();

    for _ in 0..config.max_iters.max(1) {
        for (l, p) in labels.iter_mut().zip(points) {
            *l = nearest(p, &centroids);
        }
        repair_empty(points, &mut labels, k);
        let next = means(points, &labels, k);
        let shift = centroids
            .iter()
            .zip(&next)
            .map(|(a, b)| sq_dist(a, b).sqrt())
            .fold(0.0, f64::max);
        centroids = next;
        trace.push(wgss(points, &labels, k));
        if shift < config.tol {
            break;
        }
    }
    if config.local_moves {
        local_moves(points, &mut labels, k, config.max_iters.max(1), &mut trace);
    }
    (labels, trace)
}

/// Moves the point farthest from its centroid (in a cluster of size ≥ 2)
/// into each empty cluster.
fn repair_empty(points: &[Vec<f64>], labels: &mut [usize], k: usize) {
    loop {
        let mut sizes = vec![0usize; k];
        labels.iter().for_each(|&l| sizes[l] += 1);
        let Some(empty) = sizes.iter().position(|&s| s == 0) else {
            return;
        };
        let cur = means(points, labels, k);
        let far = (0..points.len())
            .filter(|&i| sizes[labels[i]] > 1)
            .max_by(|&a, &b| {
                sq_dist(&points[a], &cur[labels[a]])
                    .total_cmp(&sq_dist(&points[b], &cur[labels[b]]))
                    .then(b.cmp(&a))
            })
            .expect("k <= distinct points leaves a cluster of size >= 2");
        labels[far] = empty;
    }
}

/// Single-point moves: relocate a point when the exact WGSS change is negative.
/// Removing `x` from cluster `a` saves `n_a/(n_a−1)·||x−μ_a||²`; adding it to
/// `c` costs `n_c/(n_c+1)·||x−μ_c||²`.
fn local_moves(points: &[Vec<f64>], labels: &mut [usize], k: usize, max_sweeps: usize, trace: &mut Vec<f64>) {
    let dim = points[0].len();
    let mut sums = vec![vec![0.0; dim]; k];
    let mut sizes = vec![0usize; k];
    for (p, &l) in points.iter().zip(labels.iter()) {
        sizes[l] += 1;
        for (s, x) in sums[l].iter_mut().zip(p) {
            *s += x;
        }
    }
    let mean = |sums: &[Vec<f64>], sizes: &[usize], c: usize| -> Vec<f64> { sums[c].iter().map(|s| s / sizes[c] as f64).collect() };
    for _ in 0..max_sweeps {
        let mut moved = false;
        for i in 0..points.len() {
            let a = labels[i];
            if sizes[a] < 2 {
                continue;
            }
            let na = sizes[a] as f64;
            let save = na / (na - 1.0) * sq_dist(&points[i], &mean(&sums, &sizes, a));
            let mut best = (save * (1.0 - 1e-12), a);
            for c in 0..k {
                if c == a {
                    continue;
                }
                let nc = sizes[c] as f64;
                let cost = nc / (nc + 1.0) * sq_dist(&points[i], &mean(&sums, &sizes, c));
                if cost < best.0 {
                    best = (cost, c);
                }
            }
            let c = best.1;
            if c != a {
                for d in 0..dim {
                    sums[a][d] -= points[i][d];
                    sums[c][d] += points[i][d];
                }
                sizes[a] -= 1;
                sizes[c] += 1;
                labels[i] = c;
                moved = true;
            }
        }
        if !moved {
            break;
        }
        trace.push(wgss(points, labels, k));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn k1_centroid_is_the_mean() {
        let pts = vec![vec![0.0, 0.0], vec![2.0, 0.0], vec![4.0, 3.0]];
        let r = kmeans(&pts, &KMeansConfig::new(1)).unwrap();
        assert_eq!(r.model.centroids[0], vec![2.0, 1.0]);
        let sse: f64 = pts.iter().map(|p| sq_dist(p, &[2.0, 1.0])).sum();
        assert!((r.model.wgss - sse).abs() < 1e-12);
    }

    #[test]
    fn duplicates_have_zero_wgss() {
        let pts = vec![vec![1.5, -2.0]; 6];
        let r = kmeans(&pts, &KMeansConfig::new(1)).unwrap();
        assert_eq!(r.model.wgss, 0.0);
        assert!(matches!(kmeans(&pts, &KMeansConfig::new(2)), Err(ClusterError::TooManyClusters { distinct: 1, .. })));
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(kmeans(&[], &KMeansConfig::new(1)), Err(ClusterError::Empty)));
        assert!(matches!(kmeans(&[vec![f64::NAN]], &KMeansConfig::new(1)), Err(ClusterError::NonFinite(0))));
        assert!(matches!(kmeans(&[vec![0.0], vec![1.0, 2.0]], &KMeansConfig::new(1)), Err(ClusterError::Dimension { .. })));
        assert!(matches!(kmeans(&[vec![0.0]], &KMeansConfig::new(0)), Err(ClusterError::ZeroK)));
    }

    #[test]
    fn no_empty_clusters() {
        // Many coincident points make empty clusters likely without repair.
        let mut pts = vec![vec![0.0]; 20];
        pts.extend([vec![1.0], vec![2.0], vec![3.0]]);
        for seed in 0..20 {
            let r = kmeans(&pts, &KMeansConfig { seed, local_moves: false, ..KMeansConfig::new(4) }).unwrap();
            let mut sizes = [0; 4];
            r.labels.iter().for_each(|&l| sizes[l] += 1);
            assert!(sizes.iter().all(|&s| s > 0), "seed {seed}: {sizes:?}");
        }
    }

    #[test]
    fn result_is_independent_of_thread_count() {
        let pts: Vec<Vec<f64>> = (0..60).map(|i| vec![(i * 37 % 11) as f64, (i * 13 % 7) as f64]).collect();
        let cfg = KMeansConfig { restarts: 8, ..KMeansConfig::new(3) };
        let a = kmeans(&pts, &cfg).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool.install(|| kmeans(&pts, &cfg).unwrap());
        assert_eq!(a.labels, b.labels);
        assert_eq!(a.model, b.model);
    }
}
