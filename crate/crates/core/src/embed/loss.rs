use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;
use crate::netcore::{Mlp, MlpGrads, MlpVars, Tape, Var};
use crate::numerics::Matrix;

use super::mapper::GeomMapper;

/// How tangent planes are compared.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TangentForm {
    /// Gram signature `TᵀT` of the raw difference rows.
    #[default]
    Gram,
    /// Orthogonal projector onto the row span.
    Projector,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub rec: f64,
    pub dist: f64,
    pub tan: f64,
}

impl LossWeights {
    pub const RECON: LossWeights = LossWeights { rec: 1.0, dist: 0.0, tan: 0.0 };
    pub const DIST: LossWeights = LossWeights { rec: 0.0, dist: 1.0, tan: 0.0 };
    pub const TAN: LossWeights = LossWeights { rec: 0.0, dist: 0.0, tan: 1.0 };
}

/// A training batch in scaled PCA coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    /// `b × k`
    pub coords: Matrix,
    /// Summed squared distance of the batch images to the PCA subspace.
    pub residual: f64,
    /// `(b·n′) × k` neighbor coordinates, `n′` consecutive rows per sample.
    pub neighbors: Option<Matrix>,
}

impl Batch {
    pub fn new(coords: Matrix) -> Self {
        Self {
            coords,
            residual: 0.0,
            neighbors: None,
        }
    }

    pub fn len(&self) -> usize {
        self.coords.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.rows() == 0
    }

    fn neighbor_count(&self) -> Result<(usize, &Matrix)> {
        let nb = self
            .neighbors
            .as_ref()
            .ok_or_else(|| Error::Config("encoder tangent loss needs neighbor images".into()))?;
        let b = self.len();
        if b == 0 || nb.rows() % b != 0 || nb.rows() == 0 {
            return Err(Error::Config(alloc::format!(
                "neighbor rows {} are not a positive multiple of batch size {b}",
                nb.rows()
            )));
        }
        Ok((nb.rows() / b, nb))
    }
}

/// Individual loss values; `total` is the weighted sum.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossTerms {
    pub recon: f64,
    pub dist: f64,
    pub tan: f64,
    pub total: f64,
}

/// A loss value with the parameter gradient of one network.
#[derive(Debug, Clone, PartialEq)]
pub struct LossGrad {
    pub terms: LossTerms,
    pub grads: MlpGrads,
}

impl LossGrad {
    pub fn value(&self) -> f64 {
        self.terms.total
    }
}

/// Indices of the `n` nearest other rows of `w`, `n` per row.
pub fn batch_neighbors(w: &Matrix, n: usize) -> Result<Vec<usize>> {
    let b = w.rows();
    if n == 0 || n >= b {
        return Err(Error::Config(alloc::format!("need 1 ≤ n′ < b, got n′ = {n}, b = {b}")));
    }
    let mut out = Vec::with_capacity(b * n);
    for k in 0..b {
        let mut order: Vec<(f64, usize)> = (0..b)
            .filter(|&m| m != k)
            .map(|m| (math::dist2(w.row(k), w.row(m)), m))
            .collect();
        order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        out.extend(order[..n].iter().map(|&(_, m)| m));
    }
    Ok(out)
}

fn repeat_index(b: usize, n: usize) -> Vec<usize> {
    (0..b).flat_map(|k| core::iter::repeat(k).take(n)).collect()
}

fn plane_dist(tape: &mut Tape, t: Var, group: usize, form: TangentForm) -> Result<Var> {
    match form {
        TangentForm::Gram => tape.gram_dist(t, group),
        TangentForm::Projector => tape.projector_dist(t, group),
    }
}

/// Pixel-space reconstruction error per image, from PCA coordinates.
fn recon_term(tape: &mut Tape, m: &GeomMapper, out: Var, target: &Matrix, residual: f64) -> Result<Var> {
    let b = target.rows() as f64;
    let t = tape.constant(target.clone());
    let diff = tape.sub(out, t)?;
    let ss = tape.sum_squares(diff);
    let scaled = tape.scale(ss, 1.0 / (m.scale * m.scale * b));
    let r = tape.constant(Matrix::filled(1, 1, residual / b));
    tape.add(scaled, r)
}

fn finish(tape: &mut Tape, net: &Mlp, vars: &MlpVars, terms: [(Option<Var>, f64); 3], grads: bool) -> Result<LossGrad> {
    let value = |v: Option<Var>| v.map_or(0.0, |v| tape.scalar(v));
    let mut out = LossTerms {
        recon: value(terms[0].0),
        dist: value(terms[1].0),
        tan: value(terms[2].0),
        total: 0.0,
    };
    let weighted: Vec<(Var, f64)> = terms
        .iter()
        .filter_map(|&(v, w)| v.filter(|_| w != 0.0).map(|v| (v, w)))
        .collect();
    out.total = weighted.iter().map(|&(v, w)| w * tape.scalar(v)).sum();
    let grads = if grads && !weighted.is_empty() {
        let total = tape.weighted_sum(weighted)?;
        net.collect_grads(&tape.backward(total)?, vars)
    } else {
        MlpGrads::zeros_like(net)
    };
    Ok(LossGrad { terms: out, grads })
}

/// Objective for a generator update. `geom_latent` feeds the geometry
/// terms; the reconstruction term uses `E(coords)`.
pub fn generator_objective(
    m: &GeomMapper,
    batch: &Batch,
    geom_latent: Option<&Matrix>,
    n: usize,
    w: LossWeights,
    form: TangentForm,
    grads: bool,
) -> Result<LossGrad> {
    let mut tape = Tape::new();
    let gvars = m.generator.register(&mut tape, true);
    let mut terms = [(None, w.rec), (None, w.dist), (None, w.tan)];
    if w.rec != 0.0 || !grads {
        let codes = m.encoder.forward(&batch.coords)?;
        let wv = tape.constant(codes);
        let y = m.generator.forward_tape(&mut tape, &gvars, wv)?;
        terms[0].0 = Some(recon_term(&mut tape, m, y, &batch.coords, batch.residual)?);
    }
    let need_geom = w.dist != 0.0 || w.tan != 0.0 || !grads;
    if need_geom {
        let latent = match geom_latent {
            Some(l) => l.clone(),
            None => m.encoder.forward(&batch.coords)?,
        };
        let wv = tape.constant(latent.clone());
        let y = m.generator.forward_tape(&mut tape, &gvars, wv)?;
        if w.dist != 0.0 || !grads {
            let dw = tape.pairwise_dist(wv)?;
            let dy = tape.pairwise_dist(y)?;
            terms[1].0 = Some(tape.row_corr_loss(dw, dy)?);
        }
        if w.tan != 0.0 || !grads {
            terms[2].0 = Some(tangent_g(&mut tape, &latent, y, n, form)?);
        }
    }
    finish(&mut tape, &m.generator, &gvars, terms, grads)
}

fn tangent_g(tape: &mut Tape, latent: &Matrix, y: Var, n: usize, form: TangentForm) -> Result<Var> {
    let b = latent.rows();
    let nbr = batch_neighbors(latent, n)?;
    let rep = repeat_index(b, n);
    let tw = latent.gather_rows(&nbr).sub(&latent.gather_rows(&rep))?;
    let twv = tape.constant(tw);
    let dtw = plane_dist(tape, twv, n, form)?;
    let yn = tape.gather(y, nbr)?;
    let yr = tape.gather(y, rep)?;
    let ti = tape.sub(yn, yr)?;
    let dti = plane_dist(tape, ti, n, form)?;
    tape.row_corr_loss(dtw, dti)
}

/// Objective for an encoder update.
pub fn encoder_objective(m: &GeomMapper, batch: &Batch, w: LossWeights, form: TangentForm, grads: bool) -> Result<LossGrad> {
    let mut tape = Tape::new();
    let evars = m.encoder.register(&mut tape, true);
    let x = tape.constant(batch.coords.clone());
    let code = m.encoder.forward_tape(&mut tape, &evars, x)?;
    let mut terms = [(None, w.rec), (None, w.dist), (None, w.tan)];
    if w.rec != 0.0 || !grads {
        let gvars = m.generator.register(&mut tape, false);
        let y = m.generator.forward_tape(&mut tape, &gvars, code)?;
        terms[0].0 = Some(recon_term(&mut tape, m, y, &batch.coords, batch.residual)?);
    }
    if w.dist != 0.0 || !grads {
        let dw = tape.pairwise_dist(code)?;
        let dx = tape.pairwise_dist(x)?;
        terms[1].0 = Some(tape.row_corr_loss(dw, dx)?);
    }
    if w.tan != 0.0 || !grads {
        let (n, nb) = batch.neighbor_count()?;
        let b = batch.len();
        let rep = repeat_index(b, n);
        let ti = nb.sub(&batch.coords.gather_rows(&rep))?;
        let tiv = tape.constant(ti);
        let dti = plane_dist(&mut tape, tiv, n, form)?;
        let nbv = tape.constant(nb.clone());
        let wn = m.encoder.forward_tape(&mut tape, &evars, nbv)?;
        let wr = tape.gather(code, rep)?;
        let tw = tape.sub(wn, wr)?;
        let dtw = plane_dist(&mut tape, tw, n, form)?;
        terms[2].0 = Some(tape.row_corr_loss(dtw, dti)?);
    }
    finish(&mut tape, &m.encoder, &evars, terms, grads)
}

/// Reconstruction loss with gradient through G.
pub fn loss_recon_g(m: &GeomMapper, batch: &Batch) -> Result<LossGrad> {
    generator_objective(m, batch, None, 1, LossWeights::RECON, TangentForm::Gram, true)
}

/// Reconstruction loss with gradient through E.
pub fn loss_recon_e(m: &GeomMapper, batch: &Batch) -> Result<LossGrad> {
    encoder_objective(m, batch, LossWeights::RECON, TangentForm::Gram, true)
}

/// Pairwise-distance correlation between latents `w` and `G(w)`.
pub fn loss_pairwise_g(m: &GeomMapper, w: &Matrix) -> Result<LossGrad> {
    let batch = Batch::new(Matrix::zeros(w.rows(), m.pca_k()));
    generator_objective(m, &batch, Some(w), 1, LossWeights::DIST, TangentForm::Gram, true)
}

/// Pairwise-distance correlation between `E(coords)` and `coords`.
pub fn loss_pairwise_e(m: &GeomMapper, coords: &Matrix) -> Result<LossGrad> {
    encoder_objective(m, &Batch::new(coords.clone()), LossWeights::DIST, TangentForm::Gram, true)
}

/// Tangent-plane distance correlation between latents and `G` images, with
/// `n` within-batch neighbors.
pub fn loss_tangent_g(m: &GeomMapper, w: &Matrix, n: usize, form: TangentForm) -> Result<LossGrad> {
    let batch = Batch::new(Matrix::zeros(w.rows(), m.pca_k()));
    generator_objective(m, &batch, Some(w), n, LossWeights::TAN, form, true)
}

/// Tangent-plane distance correlation between image planes built from
/// supplied neighbor coordinates and their encodings.
pub fn loss_tangent_e(m: &GeomMapper, coords: &Matrix, neighbors: &Matrix, form: TangentForm) -> Result<LossGrad> {
    let batch = Batch {
        coords: coords.clone(),
        residual: 0.0,
        neighbors: Some(neighbors.clone()),
    };
    encoder_objective(m, &batch, LossWeights::TAN, form, true)
}
