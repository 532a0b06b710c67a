//! `GSMK` mapper checkpoints.
//!
//! Layout: magic, `u32` version, `u32` header length, a JSON header, then
//! the little-endian `f64` parameter blob in header order: PCA mean, PCA
//! components (row-major), explained variance, coordinate scale, encoder,
//! generator, and the optional prior mapper.

use std::path::Path;

use geomkit_core::dataset::ImageShape;
use geomkit_core::embed::GeomMapper;
use geomkit_core::netcore::{Activation, Layer, Mlp};
use geomkit_core::numerics::{Matrix, PcaModel};
use serde::{Deserialize, Serialize};

use super::{push_f64s, Reader};
use crate::error::{KitError, Result};

pub const MAGIC: &[u8; 4] = b"GSMK";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Header {
    pub shape: ImageShape,
    pub ambient_dim: usize,
    pub pca_k: usize,
    pub latent_dim: usize,
    pub activation: Activation,
    pub encoder_dims: Vec<usize>,
    pub generator_dims: Vec<usize>,
    pub mapper_dims: Option<Vec<usize>>,
    pub trained: bool,
    pub blob_values: usize,
}

fn header_of(m: &GeomMapper) -> Header {
    let count = |n: &Mlp| n.num_params();
    let blob_values = m.pca.mean.len()
        + m.pca.components.as_slice().len()
        + m.pca.explained_variance.len()
        + 1
        + count(&m.encoder)
        + count(&m.generator)
        + m.mapper.as_ref().map_or(0, count);
    Header {
        shape: m.shape,
        ambient_dim: m.pca.ambient_dim(),
        pca_k: m.pca_k(),
        latent_dim: m.latent_dim(),
        activation: m.encoder.activation(),
        encoder_dims: m.encoder.layer_dims(),
        generator_dims: m.generator.layer_dims(),
        mapper_dims: m.mapper.as_ref().map(|f| f.layer_dims()),
        trained: m.is_trained(),
        blob_values,
    }
}

pub fn encode(m: &GeomMapper) -> Result<Vec<u8>> {
    let header = serde_json::to_vec(&header_of(m)).map_err(|e| KitError::json("checkpoint header", e))?;
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(&header);
    push_f64s(&mut out, &m.pca.mean);
    push_f64s(&mut out, m.pca.components.as_slice());
    push_f64s(&mut out, &m.pca.explained_variance);
    push_f64s(&mut out, &[m.scale]);
    push_f64s(&mut out, &m.encoder.params_flat());
    push_f64s(&mut out, &m.generator.params_flat());
    if let Some(f) = &m.mapper {
        push_f64s(&mut out, &f.params_flat());
    }
    Ok(out)
}

fn build_mlp(dims: &[usize], activation: Activation, r: &mut Reader, path: &Path) -> Result<Mlp> {
    if dims.len() < 2 {
        return Err(KitError::format(path, format!("bad layer dims {dims:?}")));
    }
    let layers = dims
        .windows(2)
        .map(|w| {
            Ok(Layer {
                weight: Matrix::from_vec(w[1], w[0], r.f64s(w[0] * w[1])?)?,
                bias: Matrix::from_vec(1, w[1], r.f64s(w[1])?)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Mlp::from_layers(layers, activation)?)
}

pub fn decode(bytes: &[u8], path: &Path) -> Result<GeomMapper> {
    let mut r = Reader::new(bytes, path);
    if r.take(4)? != MAGIC {
        return Err(KitError::format(path, "not a GSMK checkpoint"));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(KitError::format(path, format!("unsupported GSMK version {version}")));
    }
    let len = r.u32()? as usize;
    let h: Header = serde_json::from_slice(r.take(len)?).map_err(|e| KitError::json(path.display().to_string(), e))?;
    let (d, k) = (h.ambient_dim, h.pca_k);
    let pca = PcaModel {
        mean: r.f64s(d)?,
        components: Matrix::from_vec(k, d, r.f64s(k * d)?)?,
        explained_variance: r.f64s(k)?,
    };
    let scale = r.f64s(1)?[0];
    let encoder = build_mlp(&h.encoder_dims, h.activation, &mut r, path)?;
    let generator = build_mlp(&h.generator_dims, h.activation, &mut r, path)?;
    let mapper = h
        .mapper_dims
        .as_ref()
        .map(|dims| build_mlp(dims, h.activation, &mut r, path))
        .transpose()?;
    r.finish()?;
    let mut m = GeomMapper::new(pca, scale, encoder, generator, mapper, h.shape)?;
    if h.trained {
        m = m.mark_trained();
    }
    if header_of(&m) != h {
        return Err(KitError::format(path, "checkpoint header disagrees with its parameters"));
    }
    Ok(m)
}

pub fn save(path: &Path, m: &GeomMapper) -> Result<Vec<u8>> {
    let bytes = encode(m)?;
    super::write(path, &bytes)?;
    Ok(bytes)
}

pub fn load(path: &Path) -> Result<GeomMapper> {
    decode(&super::read(path)?, path)
}
