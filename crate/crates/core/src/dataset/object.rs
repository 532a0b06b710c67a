//! Procedural stand-ins for the 3D objects photographed on the pose grid.

use alloc::format;
use alloc::vec::Vec;
use core::f64::consts::{PI, TAU};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math;
use crate::rng::{self, ChaCha8Rng};

use super::image::ImageShape;
use super::render::render;
use super::rotation::{Axis, Rotation};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ObjectKind {
    Chairlike,
    Planelike,
    Teapotlike,
    RandomPolyhedron,
}

impl ObjectKind {
    pub fn name(self) -> &'static str {
        match self {
            ObjectKind::Chairlike => "chairlike",
            ObjectKind::Planelike => "planelike",
            ObjectKind::Teapotlike => "teapotlike",
            ObjectKind::RandomPolyhedron => "random-polyhedron",
        }
    }
}

impl core::str::FromStr for ObjectKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "chairlike" => Ok(ObjectKind::Chairlike),
            "planelike" => Ok(ObjectKind::Planelike),
            "teapotlike" => Ok(ObjectKind::Teapotlike),
            "random-polyhedron" => Ok(ObjectKind::RandomPolyhedron),
            other => Err(Error::Config(format!("unknown object kind {other:?}"))),
        }
    }
}

/// One Gaussian splat.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplatPoint {
    pub position: [f64; 3],
    pub intensity: f64,
    /// Per-channel weights used for color renders.
    pub tint: [f64; 3],
    /// Gaussian σ, in object units.
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectModel {
    pub kind: ObjectKind,
    pub seed: u64,
    pub points: Vec<SplatPoint>,
}

/// Largest distance of any point from the origin after normalization.
pub const OBJECT_EXTENT: f64 = 0.85;
/// Global splat widening and dimming; keeps accumulated intensity below the
/// clip level so the rendered orbit stays smooth.
const SPLAT_SPREAD: f64 = 1.6;
const SPLAT_GAIN: f64 = 0.15;
const MAX_ATTEMPTS: u64 = 10;
const ASYMMETRY_MIN_REL_SE: f64 = 1e-3;

/// Deterministic object for `(kind, seed)`; reseeds when the asymmetry
/// check fails.
pub fn make_object(kind: ObjectKind, seed: u64) -> Result<ObjectModel> {
    for attempt in 0..MAX_ATTEMPTS {
        let stream = seed
            .wrapping_mul(0x9E37_79B9_7F4A_7C15)
            .wrapping_add(attempt.wrapping_mul(0xD1B5_4A32_D192_ED03))
            ^ kind as u64;
        let mut r = rng::seeded(stream);
        let mut points = match kind {
            ObjectKind::Chairlike => chair(&mut r),
            ObjectKind::Planelike => plane(&mut r),
            ObjectKind::Teapotlike => teapot(&mut r),
            ObjectKind::RandomPolyhedron => polyhedron(&mut r),
        };
        normalize(&mut points);
        let model = ObjectModel { kind, seed, points };
        if is_asymmetric(&model) {
            return Ok(model);
        }
    }
    Err(Error::Generation(format!(
        "{} object with seed {seed} stayed symmetric after {MAX_ATTEMPTS} attempts",
        kind.name()
    )))
}

/// Rotations about each axis in 30° steps must all change the image.
pub fn is_asymmetric(model: &ObjectModel) -> bool {
    let shape = ImageShape::new(1, 24, 24);
    let base = render(model, &Rotation::IDENTITY, shape);
    let scale = base.norm_sq().max(1e-12);
    Axis::ALL.iter().all(|&axis| {
        (1..12).all(|k| {
            let img = render(model, &Rotation::about(axis, k as f64 * PI / 6.0), shape);
            img.se(&base).expect("same shape") / scale > ASYMMETRY_MIN_REL_SE
        })
    })
}

fn normalize(points: &mut [SplatPoint]) {
    let n = points.len() as f64;
    let mut c = [0.0; 3];
    for p in points.iter() {
        for i in 0..3 {
            c[i] += p.position[i] / n;
        }
    }
    let mut max_r: f64 = 0.0;
    for p in points.iter_mut() {
        for i in 0..3 {
            p.position[i] -= c[i];
        }
        max_r = max_r.max(math::norm(&p.position));
    }
    let s = OBJECT_EXTENT / max_r.max(1e-12);
    for p in points.iter_mut() {
        p.position.iter_mut().for_each(|x| *x *= s);
        p.radius *= s * SPLAT_SPREAD;
        p.intensity *= SPLAT_GAIN;
    }
}

struct Builder<'a> {
    rng: &'a mut ChaCha8Rng,
    points: Vec<SplatPoint>,
    jitter: f64,
}

impl Builder<'_> {
    fn add(&mut self, p: [f64; 3], intensity: f64, tint: [f64; 3], radius: f64) {
        let j = self.jitter;
        let position = [
            p[0] + self.rng.gen_range(-j..=j),
            p[1] + self.rng.gen_range(-j..=j),
            p[2] + self.rng.gen_range(-j..=j),
        ];
        let intensity = (intensity * self.rng.gen_range(0.9..=1.1)).min(1.0);
        self.points.push(SplatPoint {
            position,
            intensity,
            tint,
            radius,
        });
    }

    /// `n` points spaced along a segment.
    fn segment(&mut self, a: [f64; 3], b: [f64; 3], n: usize, intensity: f64, tint: [f64; 3], radius: f64) {
        for i in 0..n {
            let t = if n == 1 { 0.5 } else { i as f64 / (n - 1) as f64 };
            self.add(
                [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1]), a[2] + t * (b[2] - a[2])],
                intensity,
                tint,
                radius,
            );
        }
    }
}

fn chair(r: &mut ChaCha8Rng) -> Vec<SplatPoint> {
    let wood = [0.9, 0.6, 0.3];
    let cloth = [0.3, 0.5, 0.9];
    let mut b = Builder { rng: r, points: Vec::new(), jitter: 0.02 };
    let rad = 0.09;
    // seat
    for i in 0..4 {
        for k in 0..4 {
            let x = -0.45 + 0.3 * i as f64;
            let z = -0.45 + 0.3 * k as f64;
            b.add([x, 0.0, z], 0.55, cloth, rad);
        }
    }
    // legs
    for &(x, z) in &[(-0.45, -0.45), (0.45, -0.45), (-0.45, 0.45), (0.45, 0.45)] {
        b.segment([x, -0.15, z], [x, -0.8, z], 4, 0.45, wood, rad * 0.8);
    }
    // backrest
    for i in 0..4 {
        for k in 1..5 {
            let x = -0.45 + 0.3 * i as f64;
            b.add([x, 0.22 * k as f64, -0.5], 0.5 + 0.08 * k as f64, cloth, rad);
        }
    }
    // single armrest plus a bright marker on one corner of the back
    b.segment([0.55, 0.35, -0.45], [0.55, 0.35, 0.4], 4, 0.85, wood, rad * 0.8);
    b.segment([0.55, 0.0, 0.4], [0.55, 0.3, 0.4], 2, 0.7, wood, rad * 0.7);
    b.add([-0.45, 1.0, -0.5], 1.0, [1.0, 0.2, 0.2], rad * 1.2);
    b.points
}

fn plane(r: &mut ChaCha8Rng) -> Vec<SplatPoint> {
    let body = [0.8, 0.8, 0.85];
    let accent = [0.9, 0.3, 0.2];
    let mut b = Builder { rng: r, points: Vec::new(), jitter: 0.015 };
    let rad = 0.08;
    b.segment([-0.9, 0.0, 0.0], [0.9, 0.0, 0.0], 10, 0.6, body, rad);
    b.add([1.0, 0.02, 0.0], 0.9, accent, rad * 0.8);
    // wings, longer on one side
    b.segment([0.1, 0.0, 0.12], [-0.15, 0.0, 0.85], 5, 0.5, body, rad * 0.9);
    b.segment([0.1, 0.0, -0.12], [-0.1, 0.0, -0.7], 4, 0.5, body, rad * 0.9);
    b.add([-0.05, -0.1, 0.5], 0.9, accent, rad);
    // tail
    b.segment([-0.85, 0.1, 0.0], [-0.95, 0.45, 0.0], 3, 0.7, accent, rad * 0.8);
    b.segment([-0.85, 0.0, 0.1], [-0.9, 0.0, 0.3], 2, 0.5, body, rad * 0.7);
    b.points
}

fn teapot(r: &mut ChaCha8Rng) -> Vec<SplatPoint> {
    let glaze = [0.4, 0.8, 0.6];
    let trim = [0.9, 0.8, 0.3];
    let mut b = Builder { rng: r, points: Vec::new(), jitter: 0.01 };
    let rad = 0.1;
    // body: Fibonacci sphere, slightly squashed
    let n = 36;
    let golden = PI * (3.0 - math::sqrt(5.0));
    for i in 0..n {
        let y = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
        let rr = math::sqrt(1.0 - y * y);
        let th = golden * i as f64;
        b.add([0.5 * rr * math::cos(th), 0.38 * y, 0.5 * rr * math::sin(th)], 0.45, glaze, rad);
    }
    // spout
    b.segment([0.5, -0.05, 0.0], [0.9, 0.3, 0.05], 5, 0.8, trim, rad * 0.7);
    // handle
    for k in 0..6 {
        let a = -PI / 2.0 + PI * k as f64 / 5.0;
        b.add([-0.55 - 0.22 * math::cos(a), 0.25 * math::sin(a), 0.0], 0.7, trim, rad * 0.7);
    }
    // lid knob, off center
    b.add([0.08, 0.5, 0.1], 1.0, [1.0, 0.3, 0.3], rad * 0.9);
    b.points
}

fn polyhedron(r: &mut ChaCha8Rng) -> Vec<SplatPoint> {
    let nv = r.gen_range(8..=12);
    let verts: Vec<[f64; 3]> = (0..nv)
        .map(|_| {
            let z: f64 = r.gen_range(-1.0..1.0);
            let th: f64 = r.gen_range(0.0..TAU);
            let rr = math::sqrt(1.0 - z * z) * r.gen_range(0.6..1.0);
            [rr * math::cos(th), rr * math::sin(th), z * r.gen_range(0.6..1.0)]
        })
        .collect();
    let mut b = Builder { rng: r, points: Vec::new(), jitter: 0.0 };
    for (i, v) in verts.iter().enumerate() {
        let tint = [0.5 + 0.05 * i as f64, 0.4, 0.9 - 0.05 * i as f64];
        b.add(*v, 0.5 + 0.04 * i as f64, tint, 0.09);
    }
    // each vertex joined to its nearest neighbor by an edge midpoint pair
    for (i, v) in verts.iter().enumerate() {
        let (j, _) = verts
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .map(|(j, w)| (j, math::dist(v, w)))
            .fold((0, f64::INFINITY), |best, cur| if cur.1 < best.1 { cur } else { best });
        let w = verts[j];
        b.segment(*v, w, 4, 0.4, [0.6, 0.6, 0.6], 0.07);
    }
    b.points
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_per_seed() {
        for kind in [ObjectKind::Chairlike, ObjectKind::Planelike, ObjectKind::Teapotlike, ObjectKind::RandomPolyhedron] {
            assert_eq!(make_object(kind, 7).unwrap(), make_object(kind, 7).unwrap());
        }
    }

    #[test]
    fn polyhedron_has_enough_points() {
        for seed in 0..20 {
            let m = make_object(ObjectKind::RandomPolyhedron, seed).unwrap();
            assert!(m.points.len() >= 20, "seed {seed}: {}", m.points.len());
        }
    }

    #[test]
    fn points_fit_the_view() {
        for kind in [ObjectKind::Chairlike, ObjectKind::Planelike, ObjectKind::Teapotlike] {
            let m = make_object(kind, 3).unwrap();
            let r = m.points.iter().map(|p| math::norm(&p.position)).fold(0.0, f64::max);
            assert!((r - OBJECT_EXTENT).abs() < 1e-12);
        }
    }

    #[test]
    fn mirrored_seeds_render_differently() {
        let shape = ImageShape::new(1, 32, 32);
        for kind in [ObjectKind::Chairlike, ObjectKind::RandomPolyhedron] {
            let seed = 7u64;
            let a = render(&make_object(kind, seed).unwrap(), &Rotation::IDENTITY, shape);
            let b = render(&make_object(kind, seed.reverse_bits()).unwrap(), &Rotation::IDENTITY, shape);
            assert!(a.se(&b).unwrap() > 1e-6);
        }
    }

    #[test]
    fn kind_names_parse() {
        for kind in [ObjectKind::Chairlike, ObjectKind::Planelike, ObjectKind::Teapotlike, ObjectKind::RandomPolyhedron] {
            assert_eq!(kind.name().parse::<ObjectKind>().unwrap(), kind);
        }
        assert!("sofa".parse::<ObjectKind>().is_err());
    }
}
