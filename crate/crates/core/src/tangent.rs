//! Tangent spaces of the image manifold from neighboring views, and their
//! pushforward into the latent space.

use alloc::vec::Vec;

use crate::dataset::{render, so3_distance, Axis, ImageShape, ObjectModel, PoseSample, Rotation};
use crate::error::{Error, Result};
use crate::math;
use crate::numerics::{svd, Matrix};

/// Relative singular-value cutoff used for rank decisions.
pub const RANK_TOL: f64 = 1e-10;
/// Relative finite-difference step for [`pushforward`].
pub const DEFAULT_PUSHFORWARD_EPS: f64 = 1e-2;

/// Orthonormal basis of an estimated tangent space.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentBasis {
    pub base: Vec<f64>,
    /// `r` orthonormal vectors in the ambient space of `base`.
    pub basis: Vec<Vec<f64>>,
    pub singular_values: Vec<f64>,
    pub neighbor_ids: Vec<usize>,
    /// Set when the basis came out with lower rank than requested.
    pub reduced: bool,
}

impl TangentBasis {
    pub fn rank(&self) -> usize {
        self.basis.len()
    }

    pub fn ambient_dim(&self) -> usize {
        self.base.len()
    }

    /// Orthogonal projection of `v` onto the span of the basis.
    pub fn project(&self, v: &[f64]) -> Vec<f64> {
        let mut out = alloc::vec![0.0; v.len()];
        for b in &self.basis {
            let c = math::dot(b, v);
            out.iter_mut().zip(b).for_each(|(o, &x)| *o += c * x);
        }
        out
    }

    /// A basis spanning the whole ambient space.
    pub fn full_space(base: Vec<f64>) -> Self {
        let d = base.len();
        let basis = (0..d)
            .map(|i| {
                let mut e = alloc::vec![0.0; d];
                e[i] = 1.0;
                e
            })
            .collect();
        Self {
            base,
            basis,
            singular_values: alloc::vec![1.0; d],
            neighbor_ids: Vec::new(),
            reduced: false,
        }
    }
}

/// Tangent space at `samples[i]` from its nearest neighbors in the same set.
pub fn estimate_tangents(samples: &[PoseSample], i: usize, neighbors: usize, rank: usize) -> Result<TangentBasis> {
    let base = samples
        .get(i)
        .ok_or_else(|| Error::Config(alloc::format!("sample index {i} out of range")))?;
    estimate_tangents_at(&base.rotation, base.image.as_slice(), samples, Some(i), neighbors, rank)
}

/// Tangent space at an arbitrary posed image, with neighbors drawn from
/// `pool` by SO(3) distance. `exclude` skips one pool entry (the base itself).
pub fn estimate_tangents_at(
    rotation: &Rotation,
    image: &[f64],
    pool: &[PoseSample],
    exclude: Option<usize>,
    neighbors: usize,
    rank: usize,
) -> Result<TangentBasis> {
    if rank == 0 || neighbors < rank {
        return Err(Error::Config(alloc::format!(
            "need neighbors ≥ rank ≥ 1, got neighbors {neighbors}, rank {rank}"
        )));
    }
    let order = nearest_by_rotation(rotation, pool, exclude, neighbors)?;
    let mut diffs = Matrix::zeros(neighbors, image.len());
    for (row, &(theta, k)) in order.iter().enumerate() {
        if theta < 1e-12 {
            return Err(Error::DuplicateRotation { neighbor: k });
        }
        let other = pool[k].image.as_slice();
        if other.len() != image.len() {
            return Err(Error::ShapeMismatch {
                context: "tangent neighbor",
                expected: (1, image.len()),
                got: (1, other.len()),
            });
        }
        for ((d, &a), &b) in diffs.row_mut(row).iter_mut().zip(other).zip(image) {
            *d = (a - b) / theta;
        }
    }
    let dec = svd(&diffs)?;
    let achieved = dec.rank(RANK_TOL);
    if achieved < rank {
        return Err(Error::RankDeficient {
            requested: rank,
            achieved,
        });
    }
    Ok(TangentBasis {
        base: image.to_vec(),
        basis: (0..rank).map(|j| dec.right(j)).collect(),
        singular_values: dec.s[..rank].to_vec(),
        neighbor_ids: order.iter().map(|&(_, k)| k).collect(),
        reduced: false,
    })
}

/// The `n` pool entries closest to `rotation` in SO(3) distance, as
/// `(distance, index)` pairs, nearest first with ties broken by index.
pub fn nearest_by_rotation(rotation: &Rotation, pool: &[PoseSample], exclude: Option<usize>, n: usize) -> Result<Vec<(f64, usize)>> {
    let mut order: Vec<(f64, usize)> = pool
        .iter()
        .enumerate()
        .filter(|(k, _)| Some(*k) != exclude)
        .map(|(k, s)| (so3_distance(rotation, &s.rotation), k))
        .collect();
    if order.len() < n {
        return Err(Error::Config(alloc::format!("pool has {} candidates, need {n}", order.len())));
    }
    order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    order.truncate(n);
    Ok(order)
}

/// A map from ambient vectors to latent vectors.
pub trait Embedding {
    fn embed(&self, x: &[f64]) -> Result<Vec<f64>>;
}

impl<F> Embedding for F
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
{
    fn embed(&self, x: &[f64]) -> Result<Vec<f64>> {
        self(x)
    }
}

/// Finite-difference image of `tangent` under the differential of `map` at
/// `base`, with step `eps·‖base‖` along each basis vector.
pub fn pushforward<E: Embedding + ?Sized>(map: &E, base: &[f64], tangent: &TangentBasis, eps: f64) -> Result<TangentBasis> {
    if !(eps > 0.0) {
        return Err(Error::Config(alloc::format!("pushforward step must be positive, got {eps}")));
    }
    if tangent.ambient_dim() != base.len() {
        return Err(Error::ShapeMismatch {
            context: "pushforward",
            expected: (1, tangent.ambient_dim()),
            got: (1, base.len()),
        });
    }
    let h = eps * math::norm(base).max(1e-12);
    let center = map.embed(base)?;
    let mut rows = Matrix::zeros(tangent.rank(), center.len());
    for (j, u) in tangent.basis.iter().enumerate() {
        let moved: Vec<f64> = base.iter().zip(u).map(|(b, x)| b + h * x).collect();
        let w = map.embed(&moved)?;
        for ((o, a), c) in rows.row_mut(j).iter_mut().zip(&w).zip(&center) {
            *o = (a - c) / h;
        }
    }
    if rows.sum_squares() == 0.0 {
        return Err(Error::DegeneratePushforward);
    }
    let dec = svd(&rows)?;
    let achieved = dec.rank(1e-8);
    if achieved == 0 {
        return Err(Error::DegeneratePushforward);
    }
    Ok(TangentBasis {
        base: center,
        basis: (0..achieved).map(|j| dec.right(j)).collect(),
        singular_values: dec.s[..achieved].to_vec(),
        neighbor_ids: tangent.neighbor_ids.clone(),
        reduced: achieved < tangent.rank(),
    })
}

/// Central-difference derivative of the rendered image along a rotation
/// about `axis` applied on top of `rotation`, with half-step `step` radians.
pub fn orbit_derivative(object: &ObjectModel, rotation: &Rotation, axis: Axis, step: f64, shape: ImageShape) -> Vec<f64> {
    let plus = render(object, &Rotation::about(axis, step).compose(rotation), shape);
    let minus = render(object, &Rotation::about(axis, -step).compose(rotation), shape);
    plus.as_slice()
        .iter()
        .zip(minus.as_slice())
        .map(|(a, b)| (a - b) / (2.0 * step))
        .collect()
}

/// Principal angles (radians, ascending) between the spans of two
/// orthonormal sets.
pub fn principal_angles(a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<Vec<f64>> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Config("principal angles need nonempty bases".into()));
    }
    let mut cross = Matrix::zeros(a.len(), b.len());
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            cross[(i, j)] = math::dot(x, y);
        }
    }
    let dec = svd(&cross)?;
    Ok(dec.s.iter().map(|&c| math::acos(c)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{make_object, GridSpec, ObjectKind};
    use crate::rng;
    use alloc::vec;
    use rand::seq::SliceRandom;
    use rand::Rng;

    fn curve_samples(n: usize) -> Vec<PoseSample> {
        let obj = make_object(ObjectKind::Chairlike, 3).unwrap();
        let (train, _) = crate::dataset::sample_grid(&obj, &GridSpec::new(vec![Axis::Y], n, 0, 180.0), ImageShape::new(1, 24, 24)).unwrap();
        train
    }

    #[test]
    fn basis_is_orthonormal() {
        let s = curve_samples(60);
        let t = estimate_tangents(&s, 10, 6, 3).unwrap();
        for (i, a) in t.basis.iter().enumerate() {
            for (j, b) in t.basis.iter().enumerate() {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((math::dot(a, b) - want).abs() < 1e-8);
            }
        }
        assert_eq!(t.neighbor_ids.len(), 6);
        assert!(!t.neighbor_ids.contains(&10));
    }

    #[test]
    fn curve_tangent_matches_dense_derivative() {
        let obj = make_object(ObjectKind::Chairlike, 3).unwrap();
        let shape = ImageShape::new(1, 32, 32);
        let (s, _) = crate::dataset::sample_grid(&obj, &GridSpec::new(vec![Axis::Y], 80, 0, 180.0), shape).unwrap();
        let step = 0.125f64.to_radians();
        let mut good = 0;
        for i in 0..s.len() {
            let t = estimate_tangents(&s, i, 2, 1).unwrap();
            let mut dense = orbit_derivative(&obj, &s[i].rotation, Axis::Y, step, shape);
            let n = math::norm(&dense);
            dense.iter_mut().for_each(|v| *v /= n);
            let ang = principal_angles(&t.basis, &[dense]).unwrap()[0];
            if ang.to_degrees() < 5.0 {
                good += 1;
            }
        }
        assert!(good * 10 >= s.len() * 9, "{good}/{}", s.len());
    }

    #[test]
    fn duplicate_rotation_is_rejected() {
        let mut s = curve_samples(30);
        let dup = s[4].clone();
        s.push(dup);
        let last = s.len() - 1;
        assert_eq!(estimate_tangents(&s, 4, 3, 1).unwrap_err(), Error::DuplicateRotation { neighbor: last });
    }

    #[test]
    fn rank_deficiency_reports_achieved_rank() {
        let obj = make_object(ObjectKind::Chairlike, 3).unwrap();
        let shape = ImageShape::new(1, 16, 16);
        let base = render(&obj, &Rotation::IDENTITY, shape);
        // two neighbors with identical images: differences are parallel
        let pool: Vec<PoseSample> = [0.1, 0.2]
            .iter()
            .enumerate()
            .map(|(index, &a)| PoseSample {
                index,
                rotation: Rotation::about(Axis::X, a),
                image: render(&obj, &Rotation::about(Axis::X, 0.1), shape),
                axis: Some(Axis::X),
                angle_deg: a,
            })
            .collect();
        let err = estimate_tangents_at(&Rotation::IDENTITY, base.as_slice(), &pool, None, 2, 2).unwrap_err();
        assert_eq!(err, Error::RankDeficient { requested: 2, achieved: 1 });
    }

    #[test]
    fn neighbor_order_does_not_matter() {
        let s = curve_samples(60);
        let base = estimate_tangents(&s, 20, 6, 2).unwrap();
        let mut shuffled = s.clone();
        shuffled.shuffle(&mut rng::seeded(9));
        let pos = shuffled.iter().position(|p| p.index == 20).unwrap();
        let t = estimate_tangents(&shuffled, pos, 6, 2).unwrap();
        for a in principal_angles(&base.basis, &t.basis).unwrap() {
            assert!(a < 1e-6);
        }
    }

    #[test]
    fn image_scaling_keeps_span() {
        let s = curve_samples(60);
        let scaled: Vec<PoseSample> = s
            .iter()
            .map(|p| {
                let mut q = p.clone();
                q.image.as_mut_slice().iter_mut().for_each(|v| *v *= 0.37);
                q
            })
            .collect();
        let a = estimate_tangents(&s, 30, 5, 2).unwrap();
        let b = estimate_tangents(&scaled, 30, 5, 2).unwrap();
        for ang in principal_angles(&a.basis, &b.basis).unwrap() {
            assert!(ang < 1e-6);
        }
    }

    #[test]
    fn linear_pushforward_spans_image_of_tangent() {
        let mut r = rng::seeded(4);
        let (d_in, d_out) = (12, 5);
        let a = Matrix::from_vec(d_out, d_in, (0..d_in * d_out).map(|_| r.gen_range(-1.0..1.0)).collect()).unwrap();
        let map = |x: &[f64]| -> Result<Vec<f64>> {
            Ok(a.row_iter().map(|row| math::dot(row, x)).collect())
        };
        let base: Vec<f64> = (0..d_in).map(|_| r.gen_range(0.0..1.0)).collect();
        let raw: Vec<Vec<f64>> = (0..2).map(|_| (0..d_in).map(|_| r.gen_range(-1.0..1.0)).collect()).collect();
        let dec = svd(&Matrix::from_rows(&raw).unwrap()).unwrap();
        let t = TangentBasis {
            base: base.clone(),
            basis: (0..2).map(|j| dec.right(j)).collect(),
            singular_values: vec![1.0, 1.0],
            neighbor_ids: vec![],
            reduced: false,
        };
        let pushed = pushforward(&map, &base, &t, DEFAULT_PUSHFORWARD_EPS).unwrap();
        let images: Vec<Vec<f64>> = t.basis.iter().map(|u| map(u).unwrap()).collect();
        let expected = svd(&Matrix::from_rows(&images).unwrap()).unwrap();
        let exp_basis: Vec<Vec<f64>> = (0..2).map(|j| expected.right(j)).collect();
        for ang in principal_angles(&pushed.basis, &exp_basis).unwrap() {
            assert!(ang < 1e-6);
        }
    }

    #[test]
    fn constant_map_is_degenerate() {
        let map = |_: &[f64]| -> Result<Vec<f64>> { Ok(vec![1.0, 2.0]) };
        let t = TangentBasis::full_space(vec![0.5; 3]);
        assert_eq!(pushforward(&map, &[0.5; 3], &t, 1e-2).unwrap_err(), Error::DegeneratePushforward);
    }

    #[test]
    fn projection_onto_axis() {
        let mut t = TangentBasis::full_space(vec![0.0, 0.0]);
        t.basis.truncate(1);
        assert_eq!(t.project(&[0.3, 0.9]), vec![0.3, 0.0]);
    }
}
