use alloc::vec::Vec;

use crate::dataset::{Image, ImageShape};
use crate::error::{Error, Result};
use crate::netcore::Mlp;
use crate::numerics::{Matrix, PcaModel};
use crate::tangent::Embedding;

/// PCA followed by an encoder, and a generator followed by the PCA inverse.
///
/// PCA coordinates are multiplied by `scale` before they reach the networks,
/// which keeps their magnitude near one.
#[derive(Debug, Clone, PartialEq)]
pub struct GeomMapper {
    pub pca: PcaModel,
    pub scale: f64,
    pub encoder: Mlp,
    pub generator: Mlp,
    pub mapper: Option<Mlp>,
    pub shape: ImageShape,
    trained: bool,
}

impl GeomMapper {
    /// Untrained mapper; checks that all dimensions agree.
    pub fn new(pca: PcaModel, scale: f64, encoder: Mlp, generator: Mlp, mapper: Option<Mlp>, shape: ImageShape) -> Result<Self> {
        let k = pca.k();
        if pca.ambient_dim() != shape.len() {
            return Err(Error::ShapeMismatch {
                context: "mapper pca",
                expected: (1, shape.len()),
                got: (1, pca.ambient_dim()),
            });
        }
        if encoder.input_dim() != k || generator.output_dim() != k {
            return Err(Error::Config(alloc::format!(
                "encoder input {} and generator output {} must equal pca k {k}",
                encoder.input_dim(),
                generator.output_dim()
            )));
        }
        if encoder.output_dim() != generator.input_dim() {
            return Err(Error::Config(alloc::format!(
                "encoder output {} differs from generator input {}",
                encoder.output_dim(),
                generator.input_dim()
            )));
        }
        if let Some(f) = &mapper {
            let d = encoder.output_dim();
            if f.input_dim() != d || f.output_dim() != d {
                return Err(Error::Config(alloc::format!("mapper must be {d} → {d}")));
            }
        }
        if !(scale > 0.0) || !scale.is_finite() {
            return Err(Error::Config(alloc::format!("coordinate scale must be positive, got {scale}")));
        }
        Ok(Self {
            pca,
            scale,
            encoder,
            generator,
            mapper,
            shape,
            trained: false,
        })
    }

    pub fn mark_trained(mut self) -> Self {
        self.trained = true;
        self
    }

    pub fn is_trained(&self) -> bool {
        self.trained
    }

    pub fn latent_dim(&self) -> usize {
        self.encoder.output_dim()
    }

    pub fn pca_k(&self) -> usize {
        self.pca.k()
    }

    fn ensure_trained(&self) -> Result<()> {
        if self.trained {
            Ok(())
        } else {
            Err(Error::UntrainedMapper)
        }
    }

    /// Scaled PCA coordinates of a flattened image.
    pub fn coords(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut y = self.pca.project(x)?;
        y.iter_mut().for_each(|v| *v *= self.scale);
        Ok(y)
    }

    /// Scaled PCA coordinates of each row.
    pub fn coords_rows(&self, x: &Matrix) -> Result<Matrix> {
        Ok(self.pca.project_rows(x)?.scale(self.scale))
    }

    /// Unclipped image vector for scaled PCA coordinates.
    pub fn uncoords(&self, y: &[f64]) -> Result<Vec<f64>> {
        let unscaled: Vec<f64> = y.iter().map(|v| v / self.scale).collect();
        self.pca.reconstruct(&unscaled)
    }

    /// Latent code of a flattened image.
    pub fn phi_vec(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.ensure_trained()?;
        let y = self.coords(x)?;
        let k = y.len();
        Ok(self.encoder.forward(&Matrix::from_vec(1, k, y)?)?.into_vec())
    }

    pub fn phi(&self, image: &Image) -> Result<Vec<f64>> {
        if image.shape() != self.shape {
            return Err(Error::ShapeMismatch {
                context: "phi image",
                expected: (1, self.shape.len()),
                got: (1, image.shape().len()),
            });
        }
        self.phi_vec(image.as_slice())
    }

    /// Latent codes of a batch of flattened images.
    pub fn phi_rows(&self, x: &Matrix) -> Result<Matrix> {
        self.ensure_trained()?;
        self.encoder.forward(&self.coords_rows(x)?)
    }

    /// Image for a latent code, clipped to `[0, 1]`.
    pub fn phi_inv(&self, w: &[f64]) -> Result<Image> {
        self.ensure_trained()?;
        if w.len() != self.latent_dim() {
            return Err(Error::ShapeMismatch {
                context: "phi_inv latent",
                expected: (1, self.latent_dim()),
                got: (1, w.len()),
            });
        }
        let y = self.generator.forward(&Matrix::from_vec(1, w.len(), w.to_vec())?)?;
        Image::from_vec_clipped(self.shape, self.uncoords(y.as_slice())?)
    }
}

impl Embedding for GeomMapper {
    fn embed(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.phi_vec(x)
    }
}
