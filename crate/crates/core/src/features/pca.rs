//! Principal component reduction fit on training rows.

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedPca {
    pub mean: Array1<f64>,
    /// cols × k projection matrix, components ordered by decreasing variance.
    pub components: Array2<f64>,
    pub explained_variance: Vec<f64>,
    pub whiten: bool,
}

impl FittedPca {
    pub fn n_components(&self) -> usize {
        self.components.ncols()
    }

    pub fn transform(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.mean.len() {
            return Err(Error::Contract(format!(
                "pca fitted on {} columns, got {}",
                self.mean.len(),
                x.ncols()
            )));
        }
        let centered = &x - &self.mean.view().insert_axis(Axis(0));
        let mut scores = centered.dot(&self.components);
        if self.whiten {
            for (mut col, var) in scores.axis_iter_mut(Axis(1)).zip(&self.explained_variance) {
                col /= var.sqrt();
            }
        }
        Ok(scores)
    }
}

/// Keeps the smallest number of components whose cumulative explained
/// variance ratio reaches `keep_variance`.
pub fn reduce_pca(
    x: ArrayView2<'_, f64>,
    keep_variance: f64,
    whiten: bool,
) -> Result<(FittedPca, Array2<f64>)> {
    let (n, m) = x.dim();
    if n < 2 {
        return Err(Error::InsufficientData(format!("pca needs >= 2 rows, got {n}")));
    }
    let mean = x.mean_axis(Axis(0)).expect("non-empty");
    let centered = &x - &mean.view().insert_axis(Axis(0));
    let cov = centered.t().dot(&centered) / (n - 1) as f64;
    let eig = SymmetricEigen::new(DMatrix::from_fn(m, m, |i, j| cov[[i, j]]));
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect();
    let total: f64 = values.iter().sum();
    let scale = values.first().copied().unwrap_or(0.0);
    if total <= 1e-12 * (1.0 + scale) || !total.is_finite() {
        return Err(Error::Fit("pca on a rank-0 matrix".into()));
    }
    let mut k = 0;
    let mut cum = 0.0;
    while k < m {
        cum += values[k];
        k += 1;
        if cum / total >= keep_variance - 1e-12 {
            break;
        }
    }
    // Whitening a numerically null direction would blow up; never keep one.
    let floor = 1e-12 * scale;
    while k > 1 && values[k - 1] <= floor {
        k -= 1;
    }
    let mut components = Array2::zeros((m, k));
    for (c, &i) in order.iter().take(k).enumerate() {
        let v = eig.eigenvectors.column(i);
        // Sign convention: largest-magnitude loading positive.
        let pivot = (0..m).max_by(|&a, &b| v[a].abs().total_cmp(&v[b].abs())).unwrap_or(0);
        let sign = if v[pivot] < 0.0 { -1.0 } else { 1.0 };
        for r in 0..m {
            components[[r, c]] = sign * v[r];
        }
    }
    let fitted = FittedPca {
        mean,
        components,
        explained_variance: values[..k].to_vec(),
        whiten,
    };
    let reduced = fitted.transform(x)?;
    Ok((fitted, reduced))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng as _;
    use rand_distr::StandardNormal;

    #[test]
    fn line_in_3d_keeps_one_component() {
        let x = Array2::from_shape_fn((50, 3), |(i, j)| (i as f64) * [1.0, -2.0, 0.5][j]);
        let (p, r) = reduce_pca(x.view(), 0.9, false).unwrap();
        assert_eq!(p.n_components(), 1);
        assert_eq!(r.ncols(), 1);
    }

    #[test]
    fn isotropic_data_keeps_all_at_high_threshold() {
        let mut rng = crate::util::rng(3);
        let x = Array2::from_shape_fn((4000, 4), |_| rng.sample::<f64, _>(StandardNormal));
        let (p, _) = reduce_pca(x.view(), 0.999, false).unwrap();
        assert_eq!(p.n_components(), 4);
    }

    #[test]
    fn scores_are_uncorrelated_and_whitened() {
        let mut rng = crate::util::rng(5);
        let base = Array2::from_shape_fn((300, 3), |_| rng.sample::<f64, _>(StandardNormal));
        let mix = ndarray::array![[2.0, 0.3, 0.0], [0.5, 1.0, 0.2], [0.0, 0.4, 0.7]];
        let x = base.dot(&mix);
        let (_, s) = reduce_pca(x.view(), 0.999, true).unwrap();
        let c = s.t().dot(&s) / (s.nrows() - 1) as f64;
        for i in 0..c.nrows() {
            for j in 0..c.ncols() {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((c[[i, j]] - expect).abs() < 1e-8, "{i},{j}: {}", c[[i, j]]);
            }
        }
    }

    #[test]
    fn rank_zero_errors() {
        let x = Array2::from_elem((10, 3), 4.0);
        assert!(matches!(reduce_pca(x.view(), 0.9, false), Err(Error::Fit(_))));
    }
}
