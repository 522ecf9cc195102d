use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{kmeans, validate_points, ClusterError, KMeansConfig};
use crate::linalg::sq_dist;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Silhouette {
    pub mean: f64,
    pub per_point: Vec<f64>,
}

/// Per-point `(b − a) / max(a, b)` with Euclidean distances, where `a` is the
/// mean distance to the rest of the point's cluster and `b` the smallest
/// mean distance to another cluster. Points in singleton clusters score 0,
/// as do points with `a = b = 0`.
pub fn silhouette(points: &[Vec<f64>], labels: &[usize]) -> Result<Silhouette, ClusterError> {
    validate_points(points)?;
    if points.len() != labels.len() {
        return Err(ClusterError::LengthMismatch {
            points: points.len(),
            labels: labels.len(),
        });
    }
    let k = labels.iter().max().map_or(0, |&m| m + 1);
    let mut sizes = vec![0usize; k];
    labels.iter().for_each(|&l| sizes[l] += 1);
    if sizes.iter().filter(|&&s| s > 0).count() < 2 {
        return Err(ClusterError::SingleCluster);
    }
    let per_point: Vec<f64> = (0..points.len())
        .into_par_iter()
        .map(|i| {
            let own = labels[i];
            if sizes[own] == 1 {
                return 0.0;
            }
            let mut sums = vec![0.0; k];
            for (j, p) in points.iter().enumerate() {
                if j != i {
                    sums[labels[j]] += sq_dist(&points[i], p).sqrt();
                }
            }
            let a = sums[own] / (sizes[own] - 1) as f64;
            let b = (0..k)
                .filter(|&c| c != own && sizes[c] > 0)
                .map(|c| sums[c] / sizes[c] as f64)
                .fold(f64::INFINITY, f64::min);
            let denom = a.max(b);
            if denom == 0.0 {
                0.0
            } else {
                (b - a) / denom
            }
        })
        .collect();
    let mean = per_point.iter().sum::<f64>() / per_point.len() as f64;
    Ok(Silhouette { mean, per_point })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub k: usize,
    pub wgss: f64,
    pub silhouette: f64,
}

/// Clusters at each `k` and scores the result.
pub fn silhouette_sweep(points: &[Vec<f64>], ks: &[usize], restarts: usize, seed: u64) -> Result<Vec<SweepRow>, ClusterError> {
    ks.iter()
        .map(|&k| {
            if k < 2 {
                return Err(ClusterError::SingleCluster);
            }
            let r = kmeans(points, &KMeansConfig { restarts, seed, ..KMeansConfig::new(k) })?;
            let s = silhouette(points, &r.labels)?;
            Ok(SweepRow {
                k,
                wgss: r.model.wgss,
                silhouette: s.mean,
            })
        })
        .collect()
}

/// `k,wgss,silhouette` CSV with a header row.
pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], w: W) -> Result<(), ClusterError> {
    let mut wr = csv::Writer::from_writer(w);
    for r in rows {
        wr.serialize(r).map_err(|e| ClusterError::Io(e.to_string()))?;
    }
    wr.flush().map_err(|e| ClusterError::Io(e.to_string()))
}
