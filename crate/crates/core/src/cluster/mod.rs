//! K-means under the within-group sum of squares, plus silhouette scoring.
//!
//! `wgss` throughout is the within-cluster squared distance to the centroid,
//! `Σ_c Σ_{i∈c} ||x_i − μ_c||²`, which equals the pairwise form
//! `Σ_c (1 / 2N_c) Σ_{i,j∈c} ||x_i − x_j||²`. The raw pairwise sum without the
//! `1/N_c` normalization is available as [`pairwise_wgss`].

mod kmeans;
mod silhouette;

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use kmeans::{kmeans, wgss, KMeansConfig, KMeansResult};
pub use silhouette::{silhouette, silhouette_sweep, write_sweep_csv, Silhouette, SweepRow};

#[derive(Debug, Error)]
pub enum ClusterError {
    #[error("no points to cluster")]
    Empty,
    #[error("k must be at least 1")]
    ZeroK,
    #[error("k = {k} exceeds the {distinct} distinct points")]
    TooManyClusters { k: usize, distinct: usize },
    #[error("point {0} has a non-finite coordinate")]
    NonFinite(usize),
    #[error("point {index} has dimension {got}, expected {expected}")]
    Dimension { index: usize, expected: usize, got: usize },
    #[error("silhouette needs at least two clusters")]
    SingleCluster,
    #[error("{points} points but {labels} cluster labels")]
    LengthMismatch { points: usize, labels: usize },
    #[error("restarts must be at least 1")]
    ZeroRestarts,
    #[error("{0}")]
    Io(String),
}

/// Trained clustering: centroids plus diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel {
    pub k: usize,
    pub centroids: Vec<Vec<f64>>,
    pub wgss: f64,
    pub pairwise_wgss: f64,
    pub restarts_used: usize,
    pub seed: u64,
    /// WGSS of every restart, in restart order.
    pub restart_wgss: Vec<f64>,
}

/// Cluster id per post.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assignment {
    pub k: usize,
    pub clusters: BTreeMap<String, usize>,
}

#[derive(Serialize, Deserialize)]
struct AssignmentLine {
    post_id: String,
    cluster: usize,
}

impl Assignment {
    pub fn new(ids: &[String], labels: &[usize], k: usize) -> Result<Self, ClusterError> {
        if ids.len() != labels.len() {
            return Err(ClusterError::LengthMismatch {
                points: ids.len(),
                labels: labels.len(),
            });
        }
        Ok(Self {
            k,
            clusters: ids.iter().cloned().zip(labels.iter().copied()).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.clusters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clusters.is_empty()
    }

    pub fn cluster_of(&self, post_id: &str) -> Option<usize> {
        self.clusters.get(post_id).copied()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.k];
        for &c in self.clusters.values() {
            s[c] += 1;
        }
        s
    }

    /// Post ids per cluster, each list sorted.
    pub fn members(&self) -> Vec<Vec<&str>> {
        let mut m = vec![Vec::new(); self.k];
        for (id, &c) in &self.clusters {
            m[c].push(id.as_str());
        }
        m
    }

    /// One `{"post_id", "cluster"}` object per line, sorted by post id.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for (id, &c) in &self.clusters {
            let line = AssignmentLine {
                post_id: id.clone(),
                cluster: c,
            };
            out.push_str(&serde_json::to_string(&line).expect("assignment line serializes"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self, ClusterError> {
        let mut clusters = BTreeMap::new();
        let mut k = 0;
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let l: AssignmentLine =
                serde_json::from_str(line).map_err(|e| ClusterError::Io(format!("assignment line {}: {e}", i + 1)))?;
            k = k.max(l.cluster + 1);
            if clusters.insert(l.post_id.clone(), l.cluster).is_some() {
                return Err(ClusterError::Io(format!("assignment line {}: duplicate post_id `{}`", i + 1, l.post_id)));
            }
        }
        Ok(Self { k, clusters })
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(self.to_jsonl().as_bytes())
    }
}

/// `(1/2) Σ_c Σ_{i,j∈c} ||x_i − x_j||²` computed via `Σ_c N_c · SSE_c`.
pub fn pairwise_wgss(points: &[Vec<f64>], labels: &[usize], k: usize) -> f64 {
    let (sse, sizes) = kmeans::per_cluster_sse(points, labels, k);
    sse.iter().zip(&sizes).map(|(s, &n)| s * n as f64).sum()
}

pub(crate) fn validate_points(points: &[Vec<f64>]) -> Result<usize, ClusterError> {
    let first = points.first().ok_or(ClusterError::Empty)?;
    let dim = first.len();
    for (i, p) in points.iter().enumerate() {
        if p.len() != dim {
            return Err(ClusterError::Dimension {
                index: i,
                expected: dim,
                got: p.len(),
            });
        }
        if p.iter().any(|x| !x.is_finite()) {
            return Err(ClusterError::NonFinite(i));
        }
    }
    Ok(dim)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn assignment_round_trip_and_sizes() {
        let ids: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
        let a = Assignment::new(&ids, &[1, 0, 1], 2).unwrap();
        assert_eq!(a.sizes(), vec![1, 2]);
        assert_eq!(a.members()[1], vec!["a", "c"]);
        assert_eq!(Assignment::from_jsonl(&a.to_jsonl()).unwrap(), a);
        assert!(Assignment::new(&ids, &[0], 1).is_err());
    }

    #[test]
    fn pairwise_form_brute_force() {
        let pts = vec![vec![0.0, 0.0], vec![1.0, 2.0], vec![3.0, 1.0], vec![-1.0, 4.0], vec![2.0, 2.0]];
        let labels = [0, 0, 1, 1, 1];
        let mut brute = 0.0;
        for i in 0..5 {
            for j in 0..5 {
                if labels[i] == labels[j] {
                    brute += crate::linalg::sq_dist(&pts[i], &pts[j]);
                }
            }
        }
        assert!((pairwise_wgss(&pts, &labels, 2) - brute / 2.0).abs() < 1e-9);
    }
}
