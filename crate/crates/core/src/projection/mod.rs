//! 2-D views of document vectors: exact PCA and exact (O(n²)) t-SNE.

mod pca;
mod tsne;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cluster::Assignment;
use crate::store::LabelValue;

pub use pca::{pca, Pca};
pub use tsne::{tsne, TsneConfig, TsneResult, MAX_TSNE_POINTS};

#[derive(Debug, Error)]
pub enum ProjectionError {
    #[error("need at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("{n} points exceeds the exact t-SNE limit of {MAX_TSNE_POINTS}")]
    TooManyPoints { n: usize },
    #[error("perplexity {perplexity} is infeasible for {n} points (must be positive and below n/3)")]
    Perplexity { perplexity: f64, n: usize },
    #[error("n_components = {requested} must be between 1 and the dimension {dim}")]
    Components { requested: usize, dim: usize },
    #[error("point {index} has dimension {got}, expected {expected}")]
    Dimension { index: usize, expected: usize, got: usize },
    #[error("point {0} has a non-finite coordinate")]
    NonFinite(usize),
    #[error("projection and assignment disagree on post `{0}`")]
    IdMismatch(String),
    #[error("{ids} ids but {points} projected points")]
    LengthMismatch { ids: usize, points: usize },
    #[error("projection csv: {0}")]
    Csv(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Pca,
    Tsne,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectedPoint {
    pub post_id: String,
    pub x: f64,
    pub y: f64,
}

/// Coordinates per post plus how they were produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Projection2D {
    pub method: Method,
    pub params: BTreeMap<String, String>,
    pub points: Vec<ProjectedPoint>,
    /// PCA only.
    pub explained_variance: Option<Vec<f64>>,
}

impl Projection2D {
    pub fn new(method: Method, ids: &[String], coords: &[Vec<f64>], params: BTreeMap<String, String>, explained_variance: Option<Vec<f64>>) -> Result<Self, ProjectionError> {
        if ids.len() != coords.len() {
            return Err(ProjectionError::LengthMismatch {
                ids: ids.len(),
                points: coords.len(),
            });
        }
        let points = ids
            .iter()
            .zip(coords)
            .map(|(id, c)| ProjectedPoint {
                post_id: id.clone(),
                x: c.first().copied().unwrap_or(0.0),
                y: c.get(1).copied().unwrap_or(0.0),
            })
            .collect();
        Ok(Self {
            method,
            params,
            points,
            explained_variance,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionRow {
    pub post_id: String,
    pub x: f64,
    pub y: f64,
    pub cluster_id: Option<usize>,
    pub label: Option<LabelValue>,
}

/// `post_id,x,y,cluster_id,label` rows; `label` is empty for unlabeled posts.
/// Every projected post must be in the assignment when one is given.
pub fn export_projection(projection: &Projection2D, assignment: Option<&Assignment>, labels: &BTreeMap<String, LabelValue>) -> Result<String, ProjectionError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for p in &projection.points {
        let cluster_id = match assignment {
            Some(a) => Some(a.cluster_of(&p.post_id).ok_or_else(|| ProjectionError::IdMismatch(p.post_id.clone()))?),
            None => None,
        };
        let row = ProjectionRow {
            post_id: p.post_id.clone(),
            x: p.x,
            y: p.y,
            cluster_id,
            label: labels.get(&p.post_id).copied().filter(|v| *v != LabelValue::Removed),
        };
        w.serialize(row).map_err(|e| ProjectionError::Csv(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| ProjectionError::Csv(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn parse_projection_csv(text: &str) -> Result<Vec<ProjectionRow>, ProjectionError> {
    csv::Reader::from_reader(text.as_bytes())
        .deserialize()
        .collect::<Result<_, _>>()
        .map_err(|e| ProjectionError::Csv(e.to_string()))
}

pub(crate) fn validate(points: &[Vec<f64>], min: usize) -> Result<usize, ProjectionError> {
    if points.len() < min {
        return Err(ProjectionError::TooFewPoints {
            needed: min,
            got: points.len(),
        });
    }
    let dim = points[0].len();
    for (i, p) in points.iter().enumerate() {
        if p.len() != dim {
            return Err(ProjectionError::Dimension {
                index: i,
                expected: dim,
                got: p.len(),
            });
        }
        if p.iter().any(|x| !x.is_finite()) {
            return Err(ProjectionError::NonFinite(i));
        }
    }
    Ok(dim)
}
