//! Thin singular value decomposition.
//!
//! One-sided (Hestenes) Jacobi on the columns, preceded by a Householder QR
//! when the matrix is tall so the Jacobi sweeps run on a square factor.
//! Singular values come out sorted nonincreasing and each right singular
//! vector is signed so that its largest-magnitude entry is positive.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;

use super::Matrix;

const MAX_SWEEPS: usize = 80;

/// `a = u · diag(s) · vᵀ` with `u: m×k`, `v: n×k`, `k = min(m, n)`.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: Matrix,
    pub s: Vec<f64>,
    pub v: Matrix,
}

impl Svd {
    /// Number of singular values above `rel_tol · s[0]`.
    pub fn rank(&self, rel_tol: f64) -> usize {
        let top = self.s.first().copied().unwrap_or(0.0);
        if top <= 0.0 {
            return 0;
        }
        self.s.iter().filter(|&&x| x > rel_tol * top).count()
    }

    /// Column `j` of `u`.
    pub fn left(&self, j: usize) -> Vec<f64> {
        self.u.column(j)
    }

    /// Column `j` of `v`.
    pub fn right(&self, j: usize) -> Vec<f64> {
        self.v.column(j)
    }
}

pub fn svd(a: &Matrix) -> Result<Svd> {
    if !a.is_finite() {
        return Err(Error::NonFinite { layer: 0 });
    }
    let (m, n) = a.shape();
    if m == 0 || n == 0 {
        return Err(Error::ShapeMismatch {
            context: "svd",
            expected: (1, 1),
            got: (m, n),
        });
    }
    let (mut u_cols, s, mut v_cols) = if m >= n {
        tall_svd(a)
    } else {
        let (v, s, u) = tall_svd(&a.transpose());
        (u, s, v)
    };
    for (uc, vc) in u_cols.iter_mut().zip(v_cols.iter_mut()) {
        let (idx, _) = vc
            .iter()
            .enumerate()
            .fold((0, 0.0), |(bi, bv), (i, &x)| {
                if libm::fabs(x) > bv {
                    (i, libm::fabs(x))
                } else {
                    (bi, bv)
                }
            });
        if vc[idx] < 0.0 {
            vc.iter_mut().for_each(|x| *x = -*x);
            uc.iter_mut().for_each(|x| *x = -*x);
        }
    }
    Ok(Svd {
        u: from_columns(&u_cols, m),
        s,
        v: from_columns(&v_cols, n),
    })
}

fn from_columns(cols: &[Vec<f64>], len: usize) -> Matrix {
    let mut out = Matrix::zeros(len, cols.len());
    for (j, c) in cols.iter().enumerate() {
        for (i, &x) in c.iter().enumerate() {
            out[(i, j)] = x;
        }
    }
    out
}

/// Returns (u columns, s, v columns) for `m ≥ n`.
fn tall_svd(a: &Matrix) -> (Vec<Vec<f64>>, Vec<f64>, Vec<Vec<f64>>) {
    let (m, n) = a.shape();
    let cols: Vec<Vec<f64>> = (0..n).map(|j| a.column(j)).collect();
    if m > n {
        let (q, r) = householder_qr(cols, m);
        let (ur, s, v) = jacobi(r, n);
        let u = ur
            .iter()
            .map(|c| {
                let mut out = vec![0.0; m];
                for (qk, &ck) in q.iter().zip(c) {
                    for (o, &qv) in out.iter_mut().zip(qk) {
                        *o += ck * qv;
                    }
                }
                out
            })
            .collect();
        (u, s, v)
    } else {
        jacobi(cols, m)
    }
}

/// Thin QR of the column set; returns (Q columns, R columns).
fn householder_qr(mut cols: Vec<Vec<f64>>, m: usize) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let n = cols.len();
    let mut reflectors: Vec<Vec<f64>> = Vec::with_capacity(n);
    for j in 0..n {
        let x = &cols[j][j..];
        let xnorm = math::norm(x);
        let mut v = x.to_vec();
        if xnorm > 0.0 {
            let alpha = if x[0] >= 0.0 { -xnorm } else { xnorm };
            v[0] -= alpha;
            let vn = math::norm(&v);
            if vn > 0.0 {
                v.iter_mut().for_each(|t| *t /= vn);
            }
        }
        for col in cols.iter_mut().skip(j) {
            reflect(&v, &mut col[j..]);
        }
        reflectors.push(v);
    }
    let r: Vec<Vec<f64>> = (0..n)
        .map(|j| {
            let mut c = vec![0.0; n];
            c[..=j].copy_from_slice(&cols[j][..=j]);
            c
        })
        .collect();
    let q = (0..n)
        .map(|k| {
            let mut e = vec![0.0; m];
            e[k] = 1.0;
            for (j, v) in reflectors.iter().enumerate().rev() {
                reflect(v, &mut e[j..]);
            }
            e
        })
        .collect();
    (q, r)
}

#[inline]
fn reflect(v: &[f64], x: &mut [f64]) {
    let d = 2.0 * math::dot(v, x);
    if d != 0.0 {
        for (xi, vi) in x.iter_mut().zip(v) {
            *xi -= d * vi;
        }
    }
}

fn jacobi(mut w: Vec<Vec<f64>>, m: usize) -> (Vec<Vec<f64>>, Vec<f64>, Vec<Vec<f64>>) {
    let n = w.len();
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|j| {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            e
        })
        .collect();
    let mut norms: Vec<f64> = w.iter().map(|c| math::dot(c, c)).collect();
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let alpha = norms[p];
                let beta = norms[q];
                if alpha == 0.0 || beta == 0.0 {
                    continue;
                }
                let gamma = math::dot(&w[p], &w[q]);
                if libm::fabs(gamma) <= 1e-15 * math::sqrt(alpha * beta) {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = libm::copysign(1.0, zeta) / (libm::fabs(zeta) + math::sqrt(1.0 + zeta * zeta));
                let c = 1.0 / math::sqrt(1.0 + t * t);
                let s = c * t;
                let (wp, wq) = pair_mut(&mut w, p, q);
                rotate(wp, wq, c, s);
                let (vp, vq) = pair_mut(&mut v, p, q);
                rotate(vp, vq, c, s);
                norms[p] = math::dot(&w[p], &w[p]);
                norms[q] = math::dot(&w[q], &w[q]);
            }
        }
        if !rotated {
            break;
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    let sv: Vec<f64> = w.iter().map(|c| math::norm(c)).collect();
    order.sort_by(|&a, &b| sv[b].total_cmp(&sv[a]).then(a.cmp(&b)));
    let s: Vec<f64> = order.iter().map(|&j| sv[j]).collect();
    let top = s.first().copied().unwrap_or(0.0);
    let mut u: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut pending = Vec::new();
    for (slot, &j) in order.iter().enumerate() {
        if sv[j] > 1e-300 && sv[j] > top * 1e-15 {
            u.push(w[j].iter().map(|x| x / sv[j]).collect());
        } else {
            u.push(vec![0.0; m]);
            pending.push(slot);
        }
    }
    complete_basis(&mut u, &pending, m);
    let v = order.iter().map(|&j| v[j].clone()).collect();
    (u, s, v)
}

/// Fills the listed (null) columns with unit vectors orthogonal to the rest.
fn complete_basis(u: &mut [Vec<f64>], pending: &[usize], m: usize) {
    let mut candidate = 0;
    for &slot in pending {
        while candidate < m {
            let mut e = vec![0.0; m];
            e[candidate] = 1.0;
            candidate += 1;
            for _ in 0..2 {
                for (k, other) in u.iter().enumerate() {
                    if k == slot {
                        continue;
                    }
                    let d = math::dot(&e, other);
                    e.iter_mut().zip(other).for_each(|(x, o)| *x -= d * o);
                }
            }
            let nrm = math::norm(&e);
            if nrm > 1e-8 {
                e.iter_mut().for_each(|x| *x /= nrm);
                u[slot] = e;
                break;
            }
        }
    }
}

#[inline]
fn rotate(a: &mut [f64], b: &mut [f64], c: f64, s: f64) {
    for (x, y) in a.iter_mut().zip(b.iter_mut()) {
        let (xa, yb) = (*x, *y);
        *x = c * xa - s * yb;
        *y = s * xa + c * yb;
    }
}

fn pair_mut<T>(v: &mut [T], p: usize, q: usize) -> (&mut T, &mut T) {
    debug_assert!(p < q);
    let (lo, hi) = v.split_at_mut(q);
    (&mut lo[p], &mut hi[0])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand::Rng;

    fn random(m: usize, n: usize, seed: u64) -> Matrix {
        let mut r = rng::seeded(seed);
        let data = (0..m * n).map(|_| r.gen_range(-1.0..1.0)).collect();
        Matrix::from_vec(m, n, data).unwrap()
    }

    fn reconstruct(d: &Svd) -> Matrix {
        let mut us = d.u.clone();
        for i in 0..us.rows() {
            for j in 0..us.cols() {
                us[(i, j)] *= d.s[j];
            }
        }
        us.matmul_nt(&d.v).unwrap()
    }

    fn orthonormal_cols(m: &Matrix) -> f64 {
        m.matmul_tn(m).unwrap().max_abs_diff(&Matrix::identity(m.cols()))
    }

    #[test]
    fn reconstructs_all_shapes() {
        for &(m, n) in &[(5, 5), (9, 4), (4, 9), (40, 3), (1, 6), (6, 1)] {
            let a = random(m, n, (m * 31 + n) as u64);
            let d = svd(&a).unwrap();
            assert!(reconstruct(&d).max_abs_diff(&a) < 1e-12, "{m}x{n}");
            assert!(orthonormal_cols(&d.u) < 1e-12);
            assert!(orthonormal_cols(&d.v) < 1e-12);
            assert!(d.s.windows(2).all(|w| w[0] >= w[1]));
        }
    }

    #[test]
    fn rank_deficient_input_keeps_orthonormal_u() {
        // rank 1
        let a = Matrix::from_rows(&[[1.0, 2.0, 3.0], [2.0, 4.0, 6.0], [-1.0, -2.0, -3.0], [0.0, 0.0, 0.0]]).unwrap();
        let d = svd(&a).unwrap();
        assert_eq!(d.rank(1e-10), 1);
        assert!(orthonormal_cols(&d.u) < 1e-12);
        assert!(reconstruct(&d).max_abs_diff(&a) < 1e-12);
    }

    #[test]
    fn sign_convention_is_deterministic() {
        let a = random(7, 5, 3);
        let d = svd(&a).unwrap();
        for j in 0..d.v.cols() {
            let col = d.right(j);
            let big = col.iter().fold(0.0f64, |b, &x| if libm::fabs(x) > libm::fabs(b) { x } else { b });
            assert!(big > 0.0);
        }
        let flipped = a.scale(-1.0);
        let df = svd(&flipped).unwrap();
        assert!(df.v.max_abs_diff(&d.v) < 1e-12);
    }
}
