//! Pairwise distance matrices, tangent-plane signatures and the row-wise
//! correlation loss that compares two distance matrices.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;

use super::{svd, Matrix};

/// Symmetric, zero-diagonal `b × b` matrix of nonnegative distances.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix(Matrix);

impl DistanceMatrix {
    pub fn len(&self) -> usize {
        self.0.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.0.rows() == 0
    }

    pub fn get(&self, k: usize, m: usize) -> f64 {
        self.0[(k, m)]
    }

    pub fn as_matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix {
        self.0
    }
}

/// Euclidean distances between the rows of `x`.
pub fn pairwise_dist(x: &Matrix) -> Result<DistanceMatrix> {
    let b = x.rows();
    if b < 2 {
        return Err(Error::InvalidBatch { min: 2, got: b });
    }
    let mut d = Matrix::zeros(b, b);
    for k in 0..b {
        for m in k + 1..b {
            let v = math::dist(x.row(k), x.row(m));
            d[(k, m)] = v;
            d[(m, k)] = v;
        }
    }
    Ok(DistanceMatrix(d))
}

/// `TᵀT` for the `n′ × q` stack of tangent difference rows.
pub fn gram_projection(t: &Matrix) -> Matrix {
    t.matmul_tn(t).expect("TᵀT is always shape-compatible")
}

/// Orthogonal projector `VVᵀ` onto the row space of `t`.
pub fn orthogonal_projector(t: &Matrix) -> Result<Matrix> {
    let dec = svd(t)?;
    let r = dec.rank(1e-10);
    let q = t.cols();
    let mut p = Matrix::zeros(q, q);
    for j in 0..r {
        let v = dec.right(j);
        for a in 0..q {
            for b in 0..q {
                p[(a, b)] += v[a] * v[b];
            }
        }
    }
    Ok(p)
}

/// Frobenius distances between every pair of `q × q` plane signatures.
pub fn proj_dist_matrix(planes: &[Matrix]) -> Result<DistanceMatrix> {
    let b = planes.len();
    if b < 2 {
        return Err(Error::InvalidBatch { min: 2, got: b });
    }
    let shape = planes[0].shape();
    if let Some(bad) = planes.iter().find(|p| p.shape() != shape) {
        return Err(Error::ShapeMismatch {
            context: "proj_dist_matrix",
            expected: shape,
            got: bad.shape(),
        });
    }
    let mut d = Matrix::zeros(b, b);
    for k in 0..b {
        for m in k + 1..b {
            let v = math::dist(planes[k].as_slice(), planes[m].as_slice());
            d[(k, m)] = v;
            d[(m, k)] = v;
        }
    }
    Ok(DistanceMatrix(d))
}

/// `‖AᵀA − BᵀB‖_F` evaluated through `n′ × n′` inner products only:
/// `‖AAᵀ‖² + ‖BBᵀ‖² − 2‖ABᵀ‖²`.
pub fn gram_frobenius_distance(a: &Matrix, b: &Matrix) -> Result<f64> {
    let aa = a.matmul_nt(a)?;
    let bb = b.matmul_nt(b)?;
    let ab = a.matmul_nt(b)?;
    let sq = aa.sum_squares() + bb.sum_squares() - 2.0 * ab.sum_squares();
    Ok(math::sqrt(sq.max(0.0)))
}

/// Value and gradients of the row-correlation loss.
#[derive(Debug, Clone)]
pub struct CorrLoss {
    pub value: f64,
    /// ∂loss/∂a, entrywise.
    pub grad_a: Matrix,
    /// ∂loss/∂b, entrywise.
    pub grad_b: Matrix,
}

/// `Σ_k (1 − ρ_k)` where `ρ_k` is the Pearson correlation of row `k` of `a`
/// with row `k` of `b`. Diagonal entries take part in every row.
pub fn corr_loss(a: &Matrix, b: &Matrix) -> Result<CorrLoss> {
    if a.shape() != b.shape() {
        return Err(Error::ShapeMismatch {
            context: "corr_loss",
            expected: a.shape(),
            got: b.shape(),
        });
    }
    let (rows, n) = a.shape();
    let mut grad_a = Matrix::zeros(rows, n);
    let mut grad_b = Matrix::zeros(rows, n);
    let mut value = 0.0;
    for k in 0..rows {
        let (ac, an) = center(a.row(k)).ok_or(Error::DegenerateRow { row: k })?;
        let (bc, bn) = center(b.row(k)).ok_or(Error::DegenerateRow { row: k })?;
        let rho = math::dot(&ac, &bc) / (an * bn);
        value += 1.0 - rho;
        // dρ/da = (b̂ − ρ â)/‖ā‖ for centered unit vectors â, b̂.
        for j in 0..n {
            let ah = ac[j] / an;
            let bh = bc[j] / bn;
            grad_a[(k, j)] = -(bh - rho * ah) / an;
            grad_b[(k, j)] = -(ah - rho * bh) / bn;
        }
    }
    Ok(CorrLoss {
        value,
        grad_a,
        grad_b,
    })
}

fn center(row: &[f64]) -> Option<(Vec<f64>, f64)> {
    let n = row.len() as f64;
    let mean = row.iter().sum::<f64>() / n;
    let centered: Vec<f64> = row.iter().map(|x| x - mean).collect();
    let norm = math::norm(&centered);
    let scale = row.iter().fold(0.0f64, |s, x| s.max(libm::fabs(*x)));
    if norm == 0.0 || norm <= 1e-13 * scale * math::sqrt(n) {
        None
    } else {
        Some((centered, norm))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use proptest::prelude::*;
    use rand::Rng;

    fn random(m: usize, n: usize, seed: u64) -> Matrix {
        let mut r = rng::seeded(seed);
        Matrix::from_vec(m, n, (0..m * n).map(|_| r.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn three_four_five() {
        let x = Matrix::from_rows(&[[0.0, 0.0], [3.0, 4.0]]).unwrap();
        let d = pairwise_dist(&x).unwrap();
        assert_eq!(d.as_matrix().as_slice(), &[0.0, 5.0, 5.0, 0.0]);
        let same = Matrix::from_rows(&[[1.0, 2.0], [1.0, 2.0]]).unwrap();
        assert_eq!(pairwise_dist(&same).unwrap().as_matrix().sum_squares(), 0.0);
        assert_eq!(
            pairwise_dist(&Matrix::zeros(1, 3)).unwrap_err(),
            Error::InvalidBatch { min: 2, got: 1 }
        );
    }

    #[test]
    fn pairwise_matches_double_loop() {
        let x = random(128, 8, 1);
        let d = pairwise_dist(&x).unwrap();
        let mut worst = 0.0f64;
        for k in 0..128 {
            for m in 0..128 {
                let mut s = 0.0;
                for c in 0..8 {
                    let t = x[(k, c)] - x[(m, c)];
                    s += t * t;
                }
                worst = worst.max(libm::fabs(math::sqrt(s) - d.get(k, m)));
            }
        }
        assert!(worst <= 1e-12);
    }

    #[test]
    fn gram_examples() {
        assert_eq!(gram_projection(&Matrix::identity(2)), Matrix::identity(2));
        let t = Matrix::from_rows(&[[3.0, 4.0]]).unwrap();
        assert_eq!(gram_projection(&t).as_slice(), &[9.0, 12.0, 12.0, 16.0]);
        let g = gram_projection(&t);
        assert_eq!(g.sub(&g).unwrap().frobenius_norm(), 0.0);
    }

    #[test]
    fn proj_dist_examples() {
        let d = proj_dist_matrix(&[Matrix::identity(2), Matrix::zeros(2, 2)]).unwrap();
        assert!(libm::fabs(d.get(0, 1) - math::sqrt(2.0)) < 1e-15);
        let same = proj_dist_matrix(&[Matrix::identity(3), Matrix::identity(3)]).unwrap();
        assert_eq!(same.get(0, 1), 0.0);
        assert!(proj_dist_matrix(&[Matrix::identity(2), Matrix::identity(3)]).is_err());
    }

    #[test]
    fn proj_dist_matches_naive() {
        let planes: Vec<Matrix> = (0..12).map(|s| random(4, 4, 100 + s)).collect();
        let d = proj_dist_matrix(&planes).unwrap();
        for k in 0..12 {
            for m in 0..12 {
                let mut s = 0.0;
                for i in 0..4 {
                    for j in 0..4 {
                        let t = planes[k][(i, j)] - planes[m][(i, j)];
                        s += t * t;
                    }
                }
                assert!(libm::fabs(math::sqrt(s) - d.get(k, m)) <= 1e-12);
            }
        }
    }

    #[test]
    fn inner_product_trick_matches_materialized_gram() {
        for seed in 0..10 {
            let a = random(5, 40, seed);
            let b = random(5, 40, seed + 50);
            let direct = math::dist(gram_projection(&a).as_slice(), gram_projection(&b).as_slice());
            let trick = gram_frobenius_distance(&a, &b).unwrap();
            assert!(libm::fabs(direct - trick) <= 1e-10 * direct.max(1.0));
        }
    }

    #[test]
    fn projector_is_idempotent() {
        let t = random(3, 6, 9);
        let p = orthogonal_projector(&t).unwrap();
        assert!(p.matmul(&p).unwrap().max_abs_diff(&p) < 1e-12);
        let trace: f64 = (0..6).map(|i| p[(i, i)]).sum();
        assert!(libm::fabs(trace - 3.0) < 1e-12);
    }

    #[test]
    fn corr_loss_zero_cases() {
        let d = pairwise_dist(&random(8, 3, 4)).unwrap().into_matrix();
        assert!(corr_loss(&d, &d).unwrap().value.abs() < 1e-14);
        assert!(corr_loss(&d, &d.scale(2.0)).unwrap().value.abs() < 1e-14);
    }

    #[test]
    fn corr_loss_reports_degenerate_row() {
        let a = Matrix::from_rows(&[[0.0, 1.0], [1.0, 0.0], [2.0, 2.0]]).unwrap();
        let b = Matrix::from_rows(&[[0.0, 1.0], [1.0, 0.0], [0.0, 3.0]]).unwrap();
        assert_eq!(corr_loss(&a, &b).unwrap_err(), Error::DegenerateRow { row: 2 });
        let a = Matrix::from_rows(&[[0.0, 1.0, 2.0], [1.0, 0.0, 1.0], [2.0, 1.0, 0.0]]).unwrap();
        let b = a.map(|_| 0.0);
        assert_eq!(corr_loss(&a, &b).unwrap_err(), Error::DegenerateRow { row: 0 });
    }

    #[test]
    fn corr_loss_gradient_matches_central_differences() {
        for seed in 0..4 {
            let a = random(8, 8, 200 + seed);
            let b = random(8, 8, 300 + seed);
            let g = corr_loss(&a, &b).unwrap();
            let h = 1e-6;
            let mut worst = 0.0f64;
            for (which, base) in [(0, &a), (1, &b)] {
                for idx in 0..64 {
                    let mut plus = base.clone();
                    plus.as_mut_slice()[idx] += h;
                    let mut minus = base.clone();
                    minus.as_mut_slice()[idx] -= h;
                    let (fp, fm) = if which == 0 {
                        (corr_loss(&plus, &b).unwrap().value, corr_loss(&minus, &b).unwrap().value)
                    } else {
                        (corr_loss(&a, &plus).unwrap().value, corr_loss(&a, &minus).unwrap().value)
                    };
                    let fd = (fp - fm) / (2.0 * h);
                    let an = if which == 0 { g.grad_a.as_slice()[idx] } else { g.grad_b.as_slice()[idx] };
                    let rel = libm::fabs(fd - an) / (libm::fabs(fd).max(libm::fabs(an)).max(1e-3));
                    worst = worst.max(rel);
                }
            }
            assert!(worst < 1e-5, "rel err {worst}");
        }
    }

    #[test]
    fn gram_invariant_under_orthogonal_rows() {
        let t = random(4, 6, 77);
        let q = svd(&random(4, 4, 78)).unwrap().u;
        let qt = q.matmul(&t).unwrap();
        assert!(gram_projection(&qt).max_abs_diff(&gram_projection(&t)) < 1e-12);
    }

    proptest! {
        #[test]
        fn pairwise_is_a_metric(seed in 0u64..1000, b in 3usize..12, d in 1usize..6) {
            let x = random(b, d, seed);
            let m = pairwise_dist(&x).unwrap();
            for i in 0..b {
                prop_assert_eq!(m.get(i, i), 0.0);
                for j in 0..b {
                    prop_assert_eq!(m.get(i, j), m.get(j, i));
                    for k in 0..b {
                        prop_assert!(m.get(i, k) <= m.get(i, j) + m.get(j, k) + 1e-12);
                    }
                }
            }
        }

        #[test]
        fn corr_loss_is_row_affine_invariant(seed in 0u64..1000, alpha in 0.01f64..50.0) {
            let d = pairwise_dist(&random(6, 3, seed)).unwrap().into_matrix();
            let mut r = rng::seeded(seed ^ 0xabc);
            let shifts: Vec<f64> = (0..6).map(|_| r.gen_range(-5.0..5.0)).collect();
            let mut e = d.scale(alpha);
            for k in 0..6 {
                e.row_mut(k).iter_mut().for_each(|x| *x += shifts[k]);
            }
            let l = corr_loss(&d, &e).unwrap().value;
            prop_assert!(l.abs() < 1e-10);
            prop_assert!((0.0..=12.0 + 1e-12).contains(&corr_loss(&d, &random(6, 6, seed + 1)).unwrap().value));
        }
    }
}
