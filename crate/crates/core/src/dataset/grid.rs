use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::image::{Image, ImageShape};
use super::object::ObjectModel;
use super::render::render;
use super::rotation::{so3_distance, so3_geodesic, Axis, Rotation};

/// Single-axis sweeps about each listed axis.
///
/// Angle `k` of a sweep with `n` samples sits at
/// `−max + (k + offset)·(2·max / n)` degrees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub axes: Vec<Axis>,
    pub train_per_axis: usize,
    pub test_per_axis: usize,
    pub max_angle_deg: f64,
    #[serde(default = "default_train_offset")]
    pub train_offset: f64,
    #[serde(default = "default_test_offset")]
    pub test_offset: f64,
}

fn default_train_offset() -> f64 {
    0.5
}

fn default_test_offset() -> f64 {
    0.25
}

impl GridSpec {
    pub fn new(axes: Vec<Axis>, train_per_axis: usize, test_per_axis: usize, max_angle_deg: f64) -> Self {
        Self {
            axes,
            train_per_axis,
            test_per_axis,
            max_angle_deg,
            train_offset: default_train_offset(),
            test_offset: default_test_offset(),
        }
    }

    pub fn train_len(&self) -> usize {
        self.axes.len() * self.train_per_axis
    }

    pub fn test_len(&self) -> usize {
        self.axes.len() * self.test_per_axis
    }
}

/// A posed view of the object.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseSample {
    pub index: usize,
    pub rotation: Rotation,
    pub image: Image,
    /// Sweep the pose belongs to, when it came from a single-axis grid.
    pub axis: Option<Axis>,
    pub angle_deg: f64,
}

/// Rotation-grid metadata without images.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPose {
    pub rotation: Rotation,
    pub axis: Option<Axis>,
    pub angle_deg: f64,
}

/// Train and test poses for the spec. Fails if the sets share a rotation or
/// a set repeats one.
pub fn grid_rotations(spec: &GridSpec) -> Result<(Vec<GridPose>, Vec<GridPose>)> {
    if spec.axes.is_empty() || spec.train_per_axis == 0 {
        return Err(Error::Config("grid needs at least one axis and one training angle".into()));
    }
    if !(spec.max_angle_deg > 0.0 && spec.max_angle_deg <= 180.0) {
        return Err(Error::Config(format!(
            "max_angle_deg must be in (0, 180], got {}",
            spec.max_angle_deg
        )));
    }
    let sweep = |n: usize, offset: f64| -> Vec<GridPose> {
        let step = 2.0 * spec.max_angle_deg / n as f64;
        spec.axes
            .iter()
            .flat_map(|&axis| {
                (0..n).map(move |k| {
                    let angle_deg = -spec.max_angle_deg + (k as f64 + offset) * step;
                    GridPose {
                        rotation: Rotation::about(axis, angle_deg.to_radians()),
                        axis: Some(axis),
                        angle_deg,
                    }
                })
            })
            .collect()
    };
    let train = sweep(spec.train_per_axis, spec.train_offset);
    let test = if spec.test_per_axis == 0 {
        Vec::new()
    } else {
        sweep(spec.test_per_axis, spec.test_offset)
    };
    const SAME: f64 = 1e-9;
    for (name, set) in [("train", &train), ("test", &test)] {
        for (i, a) in set.iter().enumerate() {
            if set[..i].iter().any(|b| so3_distance(&a.rotation, &b.rotation) < SAME) {
                return Err(Error::Config(format!("{name} grid repeats a rotation at index {i}")));
            }
        }
    }
    for (i, t) in test.iter().enumerate() {
        if train.iter().any(|r| so3_distance(&t.rotation, &r.rotation) < SAME) {
            return Err(Error::Config(format!(
                "test rotation {i} ({:?} {}°) overlaps the training grid",
                t.axis, t.angle_deg
            )));
        }
    }
    Ok((train, test))
}

pub fn render_poses(object: &ObjectModel, poses: &[GridPose], shape: ImageShape) -> Vec<PoseSample> {
    poses
        .iter()
        .enumerate()
        .map(|(index, p)| PoseSample {
            index,
            rotation: p.rotation,
            image: render(object, &p.rotation, shape),
            axis: p.axis,
            angle_deg: p.angle_deg,
        })
        .collect()
}

/// Procedural pose dataset: the object, its image shape and both splits.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub object: ObjectModel,
    pub shape: ImageShape,
    pub grid: GridSpec,
    pub train: Vec<PoseSample>,
    pub test: Vec<PoseSample>,
}

impl Dataset {
    /// Renders both splits of the grid.
    pub fn generate(object: ObjectModel, grid: GridSpec, shape: ImageShape) -> Result<Self> {
        if shape.height < 8 || shape.width < 8 || shape.channels == 0 {
            return Err(Error::Config(format!("image shape {shape:?} too small")));
        }
        let (train, test) = grid_rotations(&grid)?;
        Ok(Self {
            train: render_poses(&object, &train, shape),
            test: render_poses(&object, &test, shape),
            object,
            shape,
            grid,
        })
    }

    /// Images of the object along the slerp from `a` to `b` at `frames`
    /// evenly spaced times.
    pub fn ground_truth_path(&self, a: &Rotation, b: &Rotation, frames: usize) -> Result<Vec<Image>> {
        ground_truth_path(&self.object, a, b, frames, self.shape)
    }
}

pub fn sample_grid(object: &ObjectModel, spec: &GridSpec, shape: ImageShape) -> Result<(Vec<PoseSample>, Vec<PoseSample>)> {
    let (train, test) = grid_rotations(spec)?;
    Ok((render_poses(object, &train, shape), render_poses(object, &test, shape)))
}

pub fn ground_truth_path(
    object: &ObjectModel,
    a: &Rotation,
    b: &Rotation,
    frames: usize,
    shape: ImageShape,
) -> Result<Vec<Image>> {
    if frames < 2 {
        return Err(Error::Config(format!("path needs at least 2 frames, got {frames}")));
    }
    (0..frames)
        .map(|k| {
            let r = match k {
                0 => *a,
                k if k == frames - 1 => *b,
                k => so3_geodesic(a, b, k as f64 / (frames - 1) as f64)?,
            };
            Ok(render(object, &r, shape))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::object::{make_object, ObjectKind};
    use alloc::vec;

    #[test]
    fn preset_sizes_and_disjointness() {
        let desk = GridSpec::new(Axis::ALL.to_vec(), 80, 160, 180.0);
        let (tr, te) = grid_rotations(&desk).unwrap();
        assert_eq!((tr.len(), te.len()), (240, 480));
        let paper = GridSpec::new(Axis::ALL.to_vec(), 400, 1200, 180.0);
        let (tr, te) = grid_rotations(&paper).unwrap();
        assert_eq!((tr.len(), te.len()), (1200, 3600));
    }

    #[test]
    fn overlap_is_a_config_error() {
        let mut g = GridSpec::new(vec![Axis::X], 8, 16, 180.0);
        g.test_offset = 0.0;
        g.train_offset = 0.0;
        assert!(matches!(grid_rotations(&g), Err(Error::Config(_))));
    }

    #[test]
    fn identical_endpoints_give_identical_frames() {
        let obj = make_object(ObjectKind::Planelike, 2).unwrap();
        let r = Rotation::about(Axis::Y, 0.4);
        let frames = ground_truth_path(&obj, &r, &r, 5, ImageShape::new(1, 16, 16)).unwrap();
        assert!(frames.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn samples_regenerate() {
        let obj = make_object(ObjectKind::Chairlike, 4).unwrap();
        let spec = GridSpec::new(vec![Axis::Z], 6, 0, 180.0);
        let shape = ImageShape::new(1, 16, 16);
        let (train, _) = sample_grid(&obj, &spec, shape).unwrap();
        for s in &train {
            assert_eq!(render(&obj, &s.rotation, shape), s.image);
        }
    }
}
