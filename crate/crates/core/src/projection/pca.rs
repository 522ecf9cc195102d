use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::{validate, ProjectionError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pca {
    pub mean: Vec<f64>,
    /// Unit principal axes, strongest first. Each axis is signed so its
    /// largest-magnitude entry is positive.
    pub components: Vec<Vec<f64>>,
    /// Covariance eigenvalues of the kept axes.
    pub explained_variance: Vec<f64>,
    /// Kept eigenvalues over the total variance; all zero for degenerate input.
    pub explained_ratio: Vec<f64>,
    /// One row per input point, `n_components` wide.
    pub coords: Vec<Vec<f64>>,
    /// All points coincide; coordinates are zero.
    pub degenerate: bool,
}

impl Pca {
    /// Maps coordinates back to the input space.
    pub fn reconstruct(&self, coords: &[f64]) -> Vec<f64> {
        let mut x = self.mean.clone();
        for (c, axis) in coords.iter().zip(&self.components) {
            for (xi, a) in x.iter_mut().zip(axis) {
                *xi += c * a;
            }
        }
        x
    }
}

/// Eigen-decomposition of the sample covariance (divisor `n − 1`).
pub fn pca(points: &[Vec<f64>], n_components: usize) -> Result<Pca, ProjectionError> {
    let dim = validate(points, 2)?;
    if n_components == 0 || n_components > dim {
        return Err(ProjectionError::Components { requested: n_components, dim });
    }
    let n = points.len();
    let mut mean = vec![0.0; dim];
    for p in points {
        for (m, x) in mean.iter_mut().zip(p) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let centered = DMatrix::from_fn(n, dim, |i, j| points[i][j] - mean[j]);
    let cov = (centered.transpose() * &centered) / (n as f64 - 1.0);
    let total: f64 = cov.trace();
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));

    let degenerate = total <= f64::EPSILON * dim as f64;
    if degenerate {
        log::warn!("pca: all points coincide, returning zero coordinates");
    }
    let mut components = Vec::with_capacity(n_components);
    let mut explained_variance = Vec::with_capacity(n_components);
    for &c in order.iter().take(n_components) {
        let mut axis: Vec<f64> = eig.eigenvectors.column(c).iter().copied().collect();
        let pivot = axis
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()).then(b.0.cmp(&a.0)))
            .map_or(0, |(i, _)| i);
        if axis[pivot] < 0.0 {
            axis.iter_mut().for_each(|x| *x = -*x);
        }
        components.push(axis);
        explained_variance.push(eig.eigenvalues[c].max(0.0));
    }
    let explained_ratio = explained_variance.iter().map(|v| if degenerate { 0.0 } else { v / total }).collect();
    let coords = (0..n)
        .map(|i| {
            components
                .iter()
                .map(|axis| if degenerate { 0.0 } else { centered.row(i).iter().zip(axis).map(|(x, a)| x * a).sum() })
                .collect()
        })
        .collect();
    Ok(Pca {
        mean,
        components,
        explained_variance,
        explained_ratio,
        coords,
        degenerate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_is_rank_one() {
        let pts: Vec<Vec<f64>> = (0..30).map(|i| vec![i as f64, 2.0 * i as f64]).collect();
        let p = pca(&pts, 2).unwrap();
        assert!(p.explained_ratio[0] >= 0.999);
        let expected = [1.0 / 5f64.sqrt(), 2.0 / 5f64.sqrt()];
        for (a, b) in p.components[0].iter().zip(expected) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn identical_points_are_degenerate() {
        let p = pca(&[vec![1.0, 1.0], vec![1.0, 1.0], vec![1.0, 1.0]], 2).unwrap();
        assert!(p.degenerate);
        assert!(p.coords.iter().flatten().all(|&c| c == 0.0));
    }

    #[test]
    fn argument_errors() {
        assert!(pca(&[vec![1.0]], 1).is_err());
        assert!(pca(&[vec![1.0], vec![2.0]], 2).is_err());
        assert!(pca(&[vec![1.0], vec![2.0]], 0).is_err());
    }
}
