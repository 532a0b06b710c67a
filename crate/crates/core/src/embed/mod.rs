//! The geometry-preserving mapper and its training.

mod loss;
mod mapper;
mod train;

pub use loss::{
    batch_neighbors, encoder_objective, generator_objective, loss_pairwise_e, loss_pairwise_g, loss_recon_e,
    loss_recon_g, loss_tangent_e, loss_tangent_g, Batch, LossGrad, LossTerms, LossWeights, TangentForm,
};
pub use mapper::GeomMapper;
pub use train::{image_rows, init_mapper, train, train_with, LogRow, TrainConfig, TrainError, TrainMode, TrainSet, Trained};

use alloc::vec::Vec;

use crate::error::Result;
use crate::numerics::{pairwise_dist, Matrix};

/// Pearson correlation between the upper-triangular pairwise distances of
/// latent codes and of scaled PCA coordinates, for a batch of images.
pub fn geometry_correlation(m: &GeomMapper, images: &Matrix) -> Result<f64> {
    let coords = m.coords_rows(images)?;
    let codes = m.encoder.forward(&coords)?;
    let (da, db) = (pairwise_dist(&codes)?, pairwise_dist(&coords)?);
    let n = da.len();
    let mut a = Vec::new();
    let mut b = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            a.push(da.get(i, j));
            b.push(db.get(i, j));
        }
    }
    Ok(pearson(&a, &b))
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    sab / crate::math::sqrt(saa * sbb)
}
