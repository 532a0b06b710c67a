use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{svd, Matrix};

/// Affine PCA subspace fitted to row samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    /// `k × D`, orthonormal rows.
    pub components: Matrix,
    pub explained_variance: Vec<f64>,
}

impl PcaModel {
    pub fn k(&self) -> usize {
        self.components.rows()
    }

    pub fn ambient_dim(&self) -> usize {
        self.mean.len()
    }

    /// Coordinates of `x` in the component basis.
    pub fn project(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_ambient(x.len())?;
        let centered: Vec<f64> = x.iter().zip(&self.mean).map(|(a, m)| a - m).collect();
        Ok(self
            .components
            .row_iter()
            .map(|c| crate::math::dot(c, &centered))
            .collect())
    }

    /// Point of the affine subspace with coordinates `y`.
    pub fn reconstruct(&self, y: &[f64]) -> Result<Vec<f64>> {
        if y.len() != self.k() {
            return Err(Error::ShapeMismatch {
                context: "pca reconstruct",
                expected: (1, self.k()),
                got: (1, y.len()),
            });
        }
        let mut out = self.mean.clone();
        for (c, &coef) in self.components.row_iter().zip(y) {
            for (o, &cv) in out.iter_mut().zip(c) {
                *o += coef * cv;
            }
        }
        Ok(out)
    }

    /// Row-wise [`project`](Self::project) of an `N × D` batch.
    pub fn project_rows(&self, x: &Matrix) -> Result<Matrix> {
        self.check_ambient(x.cols())?;
        let mut centered = x.clone();
        for i in 0..centered.rows() {
            for (v, m) in centered.row_mut(i).iter_mut().zip(&self.mean) {
                *v -= m;
            }
        }
        centered.matmul_nt(&self.components)
    }

    fn check_ambient(&self, got: usize) -> Result<()> {
        if got != self.ambient_dim() {
            return Err(Error::ShapeMismatch {
                context: "pca project",
                expected: (1, self.ambient_dim()),
                got: (1, got),
            });
        }
        Ok(())
    }
}

/// Fits the top-`k` principal directions of the rows of `data`.
pub fn pca_fit(data: &Matrix, k: usize) -> Result<PcaModel> {
    let (n, d) = data.shape();
    if n < 2 {
        return Err(Error::InvalidBatch { min: 2, got: n });
    }
    let max = n.min(d);
    if k == 0 || k > max {
        return Err(Error::InvalidK { k, max });
    }
    let mut mean = vec![0.0; d];
    for row in data.row_iter() {
        for (m, &x) in mean.iter_mut().zip(row) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut centered = data.clone();
    for i in 0..n {
        for (v, m) in centered.row_mut(i).iter_mut().zip(&mean) {
            *v -= m;
        }
    }
    let dec = svd(&centered)?;
    let mut components = Matrix::zeros(k, d);
    for j in 0..k {
        for i in 0..d {
            components[(j, i)] = dec.v[(i, j)];
        }
    }
    let explained_variance = dec.s[..k]
        .iter()
        .map(|s| s * s / (n as f64 - 1.0))
        .collect();
    Ok(PcaModel {
        mean,
        components,
        explained_variance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math;
    use crate::rng;
    use rand::Rng;

    #[test]
    fn line_data_is_rank_one() {
        let dir = [1.0, -2.0, 0.5];
        let rows: Vec<Vec<f64>> = (0..10)
            .map(|i| {
                let t = i as f64 * 0.3 - 1.0;
                vec![3.0 + t * dir[0], 1.0 + t * dir[1], -2.0 + t * dir[2]]
            })
            .collect();
        let data = Matrix::from_rows(&rows).unwrap();
        let pca = pca_fit(&data, 1).unwrap();
        for r in &rows {
            let back = pca.reconstruct(&pca.project(r).unwrap()).unwrap();
            assert!(math::dist(&back, r) < 1e-12);
        }
    }

    #[test]
    fn full_rank_is_exact_and_error_monotone() {
        let mut r = rng::seeded(11);
        let (n, d) = (20, 6);
        let data = Matrix::from_vec(n, d, (0..n * d).map(|_| r.gen_range(-1.0..1.0)).collect()).unwrap();
        let mut last = f64::INFINITY;
        for k in 1..=d {
            let pca = pca_fit(&data, k).unwrap();
            let gram = pca.components.matmul_nt(&pca.components).unwrap();
            assert!(gram.max_abs_diff(&Matrix::identity(k)) < 1e-8);
            assert!(pca.explained_variance.windows(2).all(|w| w[0] >= w[1]));
            let err: f64 = data
                .row_iter()
                .map(|x| math::dist2(&pca.reconstruct(&pca.project(x).unwrap()).unwrap(), x))
                .sum();
            assert!(err <= last + 1e-12);
            last = err;
            if k == d {
                assert!(err < 1e-20);
            }
        }
    }

    #[test]
    fn rejects_bad_k() {
        let data = Matrix::zeros(4, 3);
        assert_eq!(pca_fit(&data, 0).unwrap_err(), Error::InvalidK { k: 0, max: 3 });
        assert_eq!(pca_fit(&data, 4).unwrap_err(), Error::InvalidK { k: 4, max: 3 });
        assert!(matches!(pca_fit(&Matrix::zeros(1, 3), 1), Err(Error::InvalidBatch { .. })));
    }

    #[test]
    fn project_rows_matches_single() {
        let mut r = rng::seeded(5);
        let data = Matrix::from_vec(8, 5, (0..40).map(|_| r.gen::<f64>()).collect()).unwrap();
        let pca = pca_fit(&data, 3).unwrap();
        let batch = pca.project_rows(&data).unwrap();
        for i in 0..8 {
            let single = pca.project(data.row(i)).unwrap();
            assert!(math::dist(&single, batch.row(i)) < 1e-12);
        }
    }
}
