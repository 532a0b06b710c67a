//! Datasets on disk: a JSON manifest, one PGM/PPM per pose and a `GSTN`
//! tensor per split holding the exact pixel values.

use std::path::{Path, PathBuf};

use geomkit_core::dataset::{
    grid_rotations, make_object, render, Axis, Dataset, GridPose, Image, ImageShape, ObjectKind, ObjectModel, PoseSample,
    Rotation,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{KitError, Result};
use crate::formats::{self, hash::content_hash, pnm, tensor::Tensor};

pub const MANIFEST: &str = "manifest.json";
pub const FORMAT: &str = "geomkit-dataset";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub format: String,
    pub object: ObjectKind,
    pub object_seed: u64,
    pub shape: ImageShape,
    pub grid: geomkit_core::dataset::GridSpec,
    pub train_tensor: String,
    pub test_tensor: String,
    pub train: Vec<Entry>,
    pub test: Vec<Entry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Entry {
    pub index: usize,
    pub quaternion: [f64; 4],
    pub axis: Option<Axis>,
    pub angle_deg: f64,
    pub image: String,
}

fn render_split(object: &ObjectModel, poses: &[GridPose], shape: ImageShape) -> Vec<PoseSample> {
    poses
        .par_iter()
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

/// Renders the configured dataset in memory.
pub fn build(cfg: &RunConfig) -> Result<Dataset> {
    let d = &cfg.dataset;
    let object = make_object(d.kind, d.seed)?;
    let shape = cfg.shape();
    let (train, test) = grid_rotations(&d.grid)?;
    let (train, test) = (render_split(&object, &train, shape), render_split(&object, &test, shape));
    Ok(Dataset { object, shape, grid: d.grid.clone(), train, test })
}

fn split_tensor(samples: &[PoseSample], shape: ImageShape) -> Result<Tensor> {
    let data = samples.iter().flat_map(|s| s.image.as_slice().iter().copied()).collect();
    Tensor::new(vec![samples.len(), shape.channels, shape.height, shape.width], data)
}

fn entries(samples: &[PoseSample], split: &str, channels: usize) -> Vec<Entry> {
    let ext = if channels == 1 { "pgm" } else { "ppm" };
    samples
        .iter()
        .map(|s| Entry {
            index: s.index,
            quaternion: s.rotation.quaternion(),
            axis: s.axis,
            angle_deg: s.angle_deg,
            image: format!("{split}/img_{:04}.{ext}", s.index),
        })
        .collect()
}

fn is_nonempty_dir(dir: &Path) -> Result<bool> {
    match std::fs::read_dir(dir) {
        Ok(mut it) => Ok(it.next().is_some()),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(false),
        Err(e) => Err(KitError::io(dir, e)),
    }
}

/// Writes the dataset to `dir` and returns the manifest's content hash.
pub fn write(data: &Dataset, dir: &Path, force: bool) -> Result<String> {
    if is_nonempty_dir(dir)? {
        if !force {
            return Err(KitError::Config(format!(
                "{} is not empty; pass --force to overwrite",
                dir.display()
            )));
        }
        for sub in ["train", "test"] {
            let p = dir.join(sub);
            if p.exists() {
                std::fs::remove_dir_all(&p).map_err(|e| KitError::io(&p, e))?;
            }
        }
    }
    let shape = data.shape;
    let manifest = Manifest {
        format: FORMAT.into(),
        object: data.object.kind,
        object_seed: data.object.seed,
        shape,
        grid: data.grid.clone(),
        train_tensor: "train.gstn".into(),
        test_tensor: "test.gstn".into(),
        train: entries(&data.train, "train", shape.channels),
        test: entries(&data.test, "test", shape.channels),
    };
    for (samples, list) in [(&data.train, &manifest.train), (&data.test, &manifest.test)] {
        for (s, e) in samples.iter().zip(list) {
            pnm::write(&dir.join(&e.image), &s.image)?;
        }
    }
    formats::write(&dir.join(&manifest.train_tensor), &split_tensor(&data.train, shape)?.encode())?;
    formats::write(&dir.join(&manifest.test_tensor), &split_tensor(&data.test, shape)?.encode())?;
    let json = serde_json::to_vec_pretty(&manifest).map_err(|e| KitError::json("manifest", e))?;
    formats::write(&dir.join(MANIFEST), &json)?;
    Ok(content_hash(&json))
}

fn load_split(dir: &Path, name: &str, list: &[Entry], shape: ImageShape) -> Result<Vec<PoseSample>> {
    let path = dir.join(name);
    let t = Tensor::read(&path)?;
    if t.dims != [list.len(), shape.channels, shape.height, shape.width] {
        return Err(KitError::format(&path, format!("dims {:?} disagree with the manifest", t.dims)));
    }
    list.iter()
        .zip(t.data.chunks_exact(shape.len()))
        .map(|(e, px)| {
            Ok(PoseSample {
                index: e.index,
                rotation: Rotation::from_quaternion(e.quaternion)?,
                image: Image::from_vec(shape, px.to_vec())?,
                axis: e.axis,
                angle_deg: e.angle_deg,
            })
        })
        .collect()
}

/// A dataset written by [`write`], with its manifest hash.
pub fn load(dir: &Path) -> Result<(Dataset, String)> {
    let path: PathBuf = dir.join(MANIFEST);
    let bytes = formats::read(&path)?;
    let m: Manifest = serde_json::from_slice(&bytes).map_err(|e| KitError::json(path.display().to_string(), e))?;
    if m.format != FORMAT {
        return Err(KitError::format(&path, format!("unexpected format {:?}", m.format)));
    }
    for (i, e) in m.train.iter().chain(&m.test).enumerate() {
        let split_len = m.train.len();
        let want = if i < split_len { i } else { i - split_len };
        if e.index != want {
            return Err(KitError::format(&path, format!("entry {i} has index {}", e.index)));
        }
    }
    let data = Dataset {
        object: make_object(m.object, m.object_seed)?,
        shape: m.shape,
        grid: m.grid.clone(),
        train: load_split(dir, &m.train_tensor, &m.train, m.shape)?,
        test: load_split(dir, &m.test_tensor, &m.test, m.shape)?,
    };
    Ok((data, content_hash(&bytes)))
}
