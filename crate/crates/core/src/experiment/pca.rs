use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{param, Result};

/// Relative eigenvalue level below which a direction counts as degenerate.
const DEGENERATE_REL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Embedding {
    /// One row of `dims` coordinates per sample.
    pub coords: Vec<Vec<f64>>,
    /// Principal directions, one unit vector per kept dimension.
    pub components: Vec<Vec<f64>>,
    /// All covariance eigenvalues, descending (population normalisation).
    pub eigenvalues: Vec<f64>,
    pub mean: Vec<f64>,
    pub dims: usize,
}

impl Embedding {
    pub fn explained_variance_ratio(&self) -> Vec<f64> {
        let total: f64 = self.eigenvalues.iter().sum();
        self.eigenvalues[..self.dims].iter().map(|l| if total > 0.0 { l / total } else { 0.0 }).collect()
    }

    pub fn to_csv(&self, labels: &[String]) -> String {
        let mut s = String::from("label");
        for k in 0..self.dims {
            s.push_str(&format!(",pc{}", k + 1));
        }
        s.push('\n');
        for (l, row) in labels.iter().zip(&self.coords) {
            s.push_str(l);
            for v in row {
                s.push_str(&format!(",{v:?}"));
            }
            s.push('\n');
        }
        s
    }
}

/// Projects mean-centred samples onto the top `dims` principal directions.
/// Each direction is signed so its largest-magnitude entry is positive.
pub fn pca_embed(features: &[Vec<f64>], dims: usize) -> Result<Embedding> {
    let n = features.len();
    if dims == 0 || n < dims {
        return param(format!("need at least dims={dims} >= 1 samples, got {n}"));
    }
    let d = features[0].len();
    if d == 0 || features.iter().any(|f| f.len() != d) {
        return param("feature rows must be non-empty and of equal length");
    }
    if dims > d {
        return param(format!("dims={dims} exceeds feature dimension {d}"));
    }
    let mean: Vec<f64> = (0..d).map(|j| features.iter().map(|f| f[j]).sum::<f64>() / n as f64).collect();
    let centred = DMatrix::from_fn(n, d, |i, j| features[i][j] - mean[j]);
    let cov = centred.transpose() * &centred / n as f64;
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let eigenvalues: Vec<f64> = order.iter().map(|&k| eig.eigenvalues[k].max(0.0)).collect();
    let top = eigenvalues[0];
    let usable = eigenvalues.iter().filter(|&&l| l > DEGENERATE_REL * top.max(f64::MIN_POSITIVE)).count();
    let kept = dims.min(usable);
    if kept < dims {
        log::warn!("covariance has rank {usable}; embedding reduced from {dims} to {kept} dimensions");
    }
    let components: Vec<Vec<f64>> = order[..kept]
        .iter()
        .map(|&k| {
            let mut v: Vec<f64> = eig.eigenvectors.column(k).iter().copied().collect();
            let lead = v.iter().copied().fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
            if lead < 0.0 {
                v.iter_mut().for_each(|x| *x = -*x);
            }
            v
        })
        .collect();
    let coords = (0..n)
        .map(|i| components.iter().map(|c| (0..d).map(|j| centred[(i, j)] * c[j]).sum()).collect())
        .collect();
    Ok(Embedding { coords, components, eigenvalues, mean, dims: kept })
}
