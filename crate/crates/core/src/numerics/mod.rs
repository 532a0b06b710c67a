//! Dense linear algebra and the distance/correlation primitives shared by
//! the embedding losses.

mod distance;
mod matrix;
mod pca;
mod svd;

pub use distance::{
    corr_loss, gram_frobenius_distance, gram_projection, orthogonal_projector, pairwise_dist,
    proj_dist_matrix, CorrLoss, DistanceMatrix,
};
pub use matrix::Matrix;
pub use pca::{pca_fit, PcaModel};
pub use svd::{svd, Svd};
