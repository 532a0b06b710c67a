use core::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math;

/// Coordinate axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::X, Axis::Y, Axis::Z];

    pub fn unit(self) -> [f64; 3] {
        match self {
            Axis::X => [1.0, 0.0, 0.0],
            Axis::Y => [0.0, 1.0, 0.0],
            Axis::Z => [0.0, 0.0, 1.0],
        }
    }
}

/// Unit quaternion `(w, x, y, z)` with `w ≥ 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct Rotation([f64; 4]);

impl TryFrom<[f64; 4]> for Rotation {
    type Error = Error;
    fn try_from(q: [f64; 4]) -> Result<Self> {
        Rotation::from_quaternion(q)
    }
}

impl From<Rotation> for [f64; 4] {
    fn from(r: Rotation) -> Self {
        r.0
    }
}

impl Rotation {
    pub const IDENTITY: Rotation = Rotation([1.0, 0.0, 0.0, 0.0]);

    /// Normalizes and canonicalizes `q`.
    pub fn from_quaternion(q: [f64; 4]) -> Result<Self> {
        let n = math::norm(&q);
        if !(n > 0.0 && n.is_finite()) {
            return Err(Error::Config(alloc::format!("invalid quaternion {q:?}")));
        }
        let mut q = q.map(|c| c / n);
        let flip = match q.iter().find(|&&c| c != 0.0) {
            Some(&c) => q[0] < 0.0 || (q[0] == 0.0 && c < 0.0),
            None => false,
        };
        if flip {
            q = q.map(|c| -c);
        }
        Ok(Rotation(q))
    }

    /// Rotation by `angle` radians about `axis`; the angle is reduced mod 2π
    /// first so full turns give the exact identity.
    pub fn from_axis_angle(axis: [f64; 3], angle: f64) -> Result<Self> {
        let n = math::norm(&axis);
        if !(n > 0.0) {
            return Err(Error::Config("rotation axis must be nonzero".into()));
        }
        let mut a = libm::fmod(angle, TAU);
        if a < 0.0 {
            a += TAU;
        }
        if a == 0.0 {
            return Ok(Self::IDENTITY);
        }
        let (s, c) = (math::sin(a / 2.0), math::cos(a / 2.0));
        Self::from_quaternion([c, s * axis[0] / n, s * axis[1] / n, s * axis[2] / n])
    }

    pub fn about(axis: Axis, angle: f64) -> Self {
        Self::from_axis_angle(axis.unit(), angle).expect("unit axis")
    }

    pub fn quaternion(&self) -> [f64; 4] {
        self.0
    }

    /// `self ∘ other` (apply `other` first).
    pub fn compose(&self, other: &Rotation) -> Rotation {
        let [aw, ax, ay, az] = self.0;
        let [bw, bx, by, bz] = other.0;
        Rotation::from_quaternion([
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ])
        .expect("product of unit quaternions")
    }

    pub fn inverse(&self) -> Rotation {
        let [w, x, y, z] = self.0;
        Rotation::from_quaternion([w, -x, -y, -z]).expect("unit")
    }

    pub fn matrix(&self) -> [[f64; 3]; 3] {
        let [w, x, y, z] = self.0;
        [
            [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)],
            [2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x)],
            [2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y)],
        ]
    }

    pub fn rotate(&self, p: [f64; 3]) -> [f64; 3] {
        let m = self.matrix();
        [
            m[0][0] * p[0] + m[0][1] * p[1] + m[0][2] * p[2],
            m[1][0] * p[0] + m[1][1] * p[1] + m[1][2] * p[2],
            m[2][0] * p[0] + m[2][1] * p[1] + m[2][2] * p[2],
        ]
    }
}

/// Angle of the relative rotation, in `[0, π]`.
///
/// Evaluated as `4·atan2(‖q₁ − q₂‖, ‖q₁ + q₂‖)` on the same hemisphere, which
/// equals `2·arccos|⟨q₁, q₂⟩|` without the loss of precision near zero.
pub fn so3_distance(a: &Rotation, b: &Rotation) -> f64 {
    let (p, q) = (a.0, hemisphere(a, b));
    let diff: [f64; 4] = core::array::from_fn(|i| p[i] - q[i]);
    let sum: [f64; 4] = core::array::from_fn(|i| p[i] + q[i]);
    (4.0 * math::atan2(math::norm(&diff), math::norm(&sum))).min(PI)
}

fn hemisphere(a: &Rotation, b: &Rotation) -> [f64; 4] {
    if math::dot(&a.0, &b.0) < 0.0 {
        b.0.map(|c| -c)
    } else {
        b.0
    }
}

/// Constant-speed geodesic (slerp) along the shorter arc.
pub fn so3_geodesic(a: &Rotation, b: &Rotation, t: f64) -> Result<Rotation> {
    let dot = libm::fabs(math::dot(&a.0, &b.0));
    if dot < 1e-12 {
        return Err(Error::AmbiguousGeodesic);
    }
    if t == 0.0 {
        return Ok(*a);
    }
    if t == 1.0 {
        return Ok(*b);
    }
    let q = hemisphere(a, b);
    let half = so3_distance(a, b) / 2.0;
    if half < 1e-12 {
        return Ok(*a);
    }
    let s = math::sin(half);
    let wa = math::sin((1.0 - t) * half) / s;
    let wb = math::sin(t * half) / s;
    Rotation::from_quaternion(core::array::from_fn(|i| wa * a.0[i] + wb * q[i]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use proptest::prelude::*;

    fn random_rotation(seed: u64) -> Rotation {
        let mut r = rng::seeded(seed);
        Rotation::from_quaternion(core::array::from_fn(|_| rng::standard_normal(&mut r))).unwrap()
    }

    #[test]
    fn canonical_form() {
        let r = Rotation::from_quaternion([-1.0, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!(r, Rotation::IDENTITY);
        let r = Rotation::from_quaternion([0.0, -1.0, 0.0, 0.0]).unwrap();
        assert_eq!(r.quaternion(), [0.0, 1.0, 0.0, 0.0]);
        assert!(Rotation::from_quaternion([0.0; 4]).is_err());
        assert_eq!(Rotation::from_axis_angle([0.3, -1.0, 2.0], TAU).unwrap(), Rotation::IDENTITY);
    }

    #[test]
    fn distance_examples() {
        let s = random_rotation(1);
        assert_eq!(so3_distance(&s, &s), 0.0);
        let z = Rotation::about(Axis::Z, PI / 3.0);
        assert!((so3_distance(&Rotation::IDENTITY, &z) - PI / 3.0).abs() < 1e-14);
        let far = Rotation::about(Axis::X, 1.9 * PI);
        assert!((so3_distance(&Rotation::IDENTITY, &far) - 0.1 * PI).abs() < 1e-12);
    }

    #[test]
    fn geodesic_examples() {
        let a = Rotation::IDENTITY;
        let b = Rotation::about(Axis::Z, PI / 2.0);
        assert_eq!(so3_geodesic(&a, &b, 0.0).unwrap(), a);
        assert_eq!(so3_geodesic(&a, &b, 1.0).unwrap(), b);
        let mid = so3_geodesic(&a, &b, 0.5).unwrap();
        let expected = Rotation::about(Axis::Z, PI / 4.0);
        assert!(so3_distance(&mid, &expected) < 1e-12);
        let flipped = Rotation::about(Axis::X, PI);
        assert_eq!(so3_geodesic(&a, &flipped, 0.5).unwrap_err(), Error::AmbiguousGeodesic);
    }

    #[test]
    fn rotate_matches_composition() {
        let a = random_rotation(3);
        let b = random_rotation(4);
        let p = [0.3, -0.7, 1.1];
        let lhs = a.compose(&b).rotate(p);
        let rhs = a.rotate(b.rotate(p));
        for i in 0..3 {
            assert!((lhs[i] - rhs[i]).abs() < 1e-14);
        }
        let back = a.inverse().rotate(a.rotate(p));
        for i in 0..3 {
            assert!((back[i] - p[i]).abs() < 1e-14);
        }
    }

    proptest! {
        #[test]
        fn distance_symmetric_and_bounded(s1 in 0u64..10_000, s2 in 0u64..10_000) {
            let (a, b) = (random_rotation(s1), random_rotation(s2 + 20_000));
            let d = so3_distance(&a, &b);
            prop_assert!((d - so3_distance(&b, &a)).abs() < 1e-14);
            prop_assert!((0.0..=PI).contains(&d));
            let reference = 2.0 * math::acos(libm::fabs(math::dot(&a.0, &b.0)));
            prop_assert!((d - reference).abs() < 1e-7);
        }

        #[test]
        fn geodesic_has_constant_speed(s1 in 0u64..10_000, s2 in 0u64..10_000, t in 0.0f64..1.0) {
            let (a, b) = (random_rotation(s1), random_rotation(s2 + 20_000));
            let total = so3_distance(&a, &b);
            prop_assume!(total < PI - 1e-3);
            let m = so3_geodesic(&a, &b, t).unwrap();
            prop_assert!((so3_distance(&a, &m) - t * total).abs() < 1e-9);
            let q = m.quaternion();
            prop_assert!((math::norm(&q) - 1.0).abs() < 1e-9);
            prop_assert!(q[0] >= 0.0);
        }
    }
}
