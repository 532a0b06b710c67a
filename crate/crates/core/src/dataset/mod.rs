//! Procedural pose-manifold datasets: objects, rotations, rendering and
//! ground-truth rotation paths.

mod grid;
mod image;
mod object;
mod render;
mod rotation;

pub use grid::{
    grid_rotations, ground_truth_path, render_poses, sample_grid, Dataset, GridPose, GridSpec,
    PoseSample,
};
pub use image::{Image, ImageShape};
pub use object::{is_asymmetric, make_object, ObjectKind, ObjectModel, SplatPoint, OBJECT_EXTENT};
pub use render::{render, VIEW_HALF_WIDTH};
pub use rotation::{so3_distance, so3_geodesic, Axis, Rotation};
