//! Orthographic Gaussian-splat renderer.

use alloc::vec::Vec;

use crate::math;

use super::image::{Image, ImageShape};
use super::object::ObjectModel;
use super::rotation::Rotation;

/// Half-width of the square view window, in object units.
pub const VIEW_HALF_WIDTH: f64 = 1.15;
/// Splats are truncated beyond this many σ.
const CUTOFF_SIGMAS: f64 = 5.0;

/// Rotates the object, drops z, and accumulates one Gaussian per point.
/// Values are summed and clipped to 1.
pub fn render(object: &ObjectModel, rotation: &Rotation, shape: ImageShape) -> Image {
    let mut img = Image::zeros(shape);
    let (h, l) = (shape.height, shape.width);
    let px = 2.0 * VIEW_HALF_WIDTH / l as f64;
    let py = 2.0 * VIEW_HALF_WIDTH / h as f64;
    let xs: Vec<f64> = (0..l).map(|c| -VIEW_HALF_WIDTH + (c as f64 + 0.5) * px).collect();
    let ys: Vec<f64> = (0..h).map(|r| VIEW_HALF_WIDTH - (r as f64 + 0.5) * py).collect();
    let m = rotation.matrix();
    for p in &object.points {
        let q = p.position;
        let x = m[0][0] * q[0] + m[0][1] * q[1] + m[0][2] * q[2];
        let y = m[1][0] * q[0] + m[1][1] * q[1] + m[1][2] * q[2];
        let reach = CUTOFF_SIGMAS * p.radius;
        let inv2s2 = 1.0 / (2.0 * p.radius * p.radius);
        let c0 = (libm::floor((x - reach + VIEW_HALF_WIDTH) / px).max(0.0)) as usize;
        let c1 = (libm::ceil((x + reach + VIEW_HALF_WIDTH) / px).max(0.0) as usize).min(l);
        let r0 = (libm::floor((VIEW_HALF_WIDTH - y - reach) / py).max(0.0)) as usize;
        let r1 = (libm::ceil((VIEW_HALF_WIDTH - y + reach) / py).max(0.0) as usize).min(h);
        for (r, &yy) in ys.iter().enumerate().take(r1).skip(r0) {
            let dy2 = (yy - y) * (yy - y);
            for (c, &xx) in xs.iter().enumerate().take(c1).skip(c0) {
                let d2 = (xx - x) * (xx - x) + dy2;
                if d2 > reach * reach {
                    continue;
                }
                let g = p.intensity * math::exp(-d2 * inv2s2);
                for ch in 0..shape.channels {
                    let w = if shape.channels == 1 { 1.0 } else { p.tint[ch % 3] };
                    *img.get_mut(ch, r, c) += g * w;
                }
            }
        }
    }
    img.as_mut_slice().iter_mut().for_each(|v| *v = v.min(1.0));
    img
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::object::{make_object, ObjectKind};
    use crate::dataset::rotation::Axis;
    use core::f64::consts::TAU;

    #[test]
    fn full_turn_is_bit_identical() {
        let obj = make_object(ObjectKind::Chairlike, 1).unwrap();
        let shape = ImageShape::new(1, 32, 32);
        let base = render(&obj, &Rotation::IDENTITY, shape);
        for axis in [[1.0, 0.0, 0.0], [0.3, 0.4, -0.5], [0.0, 0.0, 2.0]] {
            let r = Rotation::from_axis_angle(axis, TAU).unwrap();
            assert_eq!(render(&obj, &r, shape), base);
        }
    }

    #[test]
    fn values_in_unit_interval() {
        let obj = make_object(ObjectKind::Teapotlike, 2).unwrap();
        let img = render(&obj, &Rotation::about(Axis::Y, 0.7), ImageShape::new(3, 24, 24));
        assert!(img.as_slice().iter().all(|v| (0.0..=1.0).contains(v)));
        assert!(img.norm_sq() > 1.0);
    }

    #[test]
    fn small_rotations_change_little() {
        let shape = ImageShape::new(1, 48, 48);
        for kind in [ObjectKind::Chairlike, ObjectKind::Planelike] {
            let obj = make_object(kind, 5).unwrap();
            for axis in Axis::ALL {
                let base_rot = Rotation::about(Axis::X, 0.3);
                let a = render(&obj, &base_rot, shape);
                let b = render(&obj, &Rotation::about(axis, 0.5f64.to_radians()).compose(&base_rot), shape);
                assert!(a.se(&b).unwrap() < 0.01 * a.norm_sq());
            }
        }
    }

    fn fnv1a(img: &Image) -> u64 {
        let mut h = 0xcbf2_9ce4_8422_2325u64;
        for v in img.as_slice() {
            for b in v.to_bits().to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        }
        h
    }

    #[test]
    fn golden_checksum() {
        let obj = make_object(ObjectKind::Chairlike, 7).unwrap();
        let rot = Rotation::from_axis_angle([0.2, 1.0, -0.4], 0.9).unwrap();
        let img = render(&obj, &rot, ImageShape::new(1, 32, 32));
        assert_eq!(fnv1a(&img), 2_298_423_330_638_033_102);
    }

    fn ranks(v: &[f64]) -> alloc::vec::Vec<f64> {
        let mut idx: alloc::vec::Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
        let mut r = alloc::vec![0.0; v.len()];
        for (rank, &i) in idx.iter().enumerate() {
            r[i] = rank as f64;
        }
        r
    }

    #[test]
    fn distance_grows_with_small_angles() {
        let shape = ImageShape::new(1, 48, 48);
        let angles: alloc::vec::Vec<f64> = (1..=20).map(|k| 0.5 * k as f64).collect();
        for kind in [ObjectKind::Chairlike, ObjectKind::Teapotlike, ObjectKind::RandomPolyhedron] {
            let obj = make_object(kind, 2).unwrap();
            let base_rot = Rotation::about(Axis::Z, 0.4);
            let base = render(&obj, &base_rot, shape);
            for axis in Axis::ALL {
                let se: alloc::vec::Vec<f64> = angles
                    .iter()
                    .map(|a| render(&obj, &Rotation::about(axis, a.to_radians()).compose(&base_rot), shape).se(&base).unwrap())
                    .collect();
                let (ra, rs) = (ranks(&angles), ranks(&se));
                let n = angles.len() as f64;
                let d2: f64 = ra.iter().zip(&rs).map(|(a, b)| (a - b) * (a - b)).sum();
                let rho = 1.0 - 6.0 * d2 / (n * (n * n - 1.0));
                assert!(rho > 0.9, "{kind:?} {axis:?} rho {rho}");
            }
        }
    }
}
