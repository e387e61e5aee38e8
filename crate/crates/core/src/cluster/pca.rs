use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Principal axes of a centered data matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pca {
    pub mean: Array1<f64>,
    /// One unit-length component per row.
    pub components: Array2<f64>,
    pub explained_variance: Vec<f64>,
    pub explained_variance_ratio: Vec<f64>,
}

impl Pca {
    pub fn fit<T: Scalar>(x: ArrayView2<'_, T>, target_dim: usize) -> Result<Self> {
        let (n, d) = x.dim();
        if target_dim == 0 || target_dim >= d {
            return Err(Error::Config(format!(
                "target dimension {target_dim} must lie in [1, {d})"
            )));
        }
        if n < 2 {
            return Err(Error::Config("PCA needs at least two rows".into()));
        }
        let x = x.mapv(|v| v.to_f64_lossy());
        let mean = x.mean_axis(Axis(0)).expect("non-empty");
        let centered = &x - &mean;
        let cov = centered.t().dot(&centered) / (n as f64 - 1.0);
        let m = DMatrix::from_fn(d, d, |i, j| cov[[i, j]]);
        let eig = SymmetricEigen::new(m);
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&a, &b| {
            eig.eigenvalues[b]
                .total_cmp(&eig.eigenvalues[a])
                .then(a.cmp(&b))
        });
        let total: f64 = eig.eigenvalues.iter().map(|v| v.max(0.0)).sum();
        let mut components = Array2::zeros((target_dim, d));
        let mut explained_variance = Vec::with_capacity(target_dim);
        for (row, &k) in order.iter().take(target_dim).enumerate() {
            let v = eig.eigenvectors.column(k);
            // sign convention: the largest-magnitude entry is positive
            let pivot = (0..d)
                .max_by(|&a, &b| v[a].abs().total_cmp(&v[b].abs()).then(b.cmp(&a)))
                .unwrap();
            let sign = if v[pivot] < 0.0 { -1.0 } else { 1.0 };
            for j in 0..d {
                components[[row, j]] = sign * v[j];
            }
            explained_variance.push(eig.eigenvalues[k].max(0.0));
        }
        let explained_variance_ratio = explained_variance
            .iter()
            .map(|v| if total > 0.0 { v / total } else { 0.0 })
            .collect();
        Ok(Pca {
            mean,
            components,
            explained_variance,
            explained_variance_ratio,
        })
    }

    pub fn transform<T: Scalar>(&self, x: ArrayView2<'_, T>) -> Result<Array2<f64>> {
        if x.ncols() != self.mean.len() {
            return Err(Error::Dimension {
                expected: self.mean.len(),
                actual: x.ncols(),
            });
        }
        let centered = &x.mapv(|v| v.to_f64_lossy()) - &self.mean;
        Ok(centered.dot(&self.components.t()))
    }

    pub fn inverse_transform(&self, z: &Array2<f64>) -> Array2<f64> {
        z.dot(&self.components) + &self.mean
    }
}

/// Projects onto the top `target_dim` principal components.
pub fn reduce_dims<T: Scalar>(
    x: ArrayView2<'_, T>,
    target_dim: usize,
) -> Result<(Array2<f64>, Pca)> {
    let pca = Pca::fit(x, target_dim)?;
    let z = pca.transform(x)?;
    Ok((z, pca))
}
