use alloc::boxed::Box;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::dataset::{ImageShape, PoseSample};
use crate::error::{Error, Result};
use crate::math;
use crate::netcore::{Activation, Mlp, Optimizer};
use crate::numerics::{pca_fit, Matrix};
use crate::rng::{self, ChaCha8Rng};
use crate::tangent::nearest_by_rotation;

use super::loss::{encoder_objective, generator_objective, Batch, LossWeights, TangentForm};
use super::mapper::GeomMapper;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrainMode {
    /// Geometry terms for G use `w = E(I)`.
    #[default]
    Autoencoder,
    /// Geometry terms for G use `w = F(z)` with Gaussian `z` and frozen F.
    PriorSampling,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub latent_dim: usize,
    pub neighbors: usize,
    pub epochs: usize,
    pub pca_k: usize,
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub lr_g: f64,
    pub lr_e: f64,
    /// Final learning rate as a fraction of the initial one, reached by
    /// cosine annealing over the epochs. 1 keeps the rate constant.
    #[serde(default = "one")]
    pub lr_final_ratio: f64,
    pub alpha_rec: f64,
    pub alpha_dist: f64,
    pub alpha_tan: f64,
    pub mode: TrainMode,
    pub seed: u64,
    pub orthonormalize_tangents: bool,
    /// Hidden width of F in prior-sampling mode.
    pub mapper_hidden: usize,
}

impl TrainConfig {
    pub fn desk() -> Self {
        Self {
            batch_size: 32,
            latent_dim: 8,
            neighbors: 8,
            epochs: 700,
            pca_k: 64,
            hidden: alloc::vec![256, 256],
            activation: Activation::Tanh,
            lr_g: 1e-3,
            lr_e: 1e-3,
            lr_final_ratio: 0.02,
            alpha_rec: 1.0,
            alpha_dist: 0.5,
            alpha_tan: 0.5,
            mode: TrainMode::Autoencoder,
            seed: 0,
            orthonormalize_tangents: false,
            mapper_hidden: 32,
        }
    }

    pub fn paper() -> Self {
        Self {
            batch_size: 128,
            latent_dim: 8,
            neighbors: 12,
            pca_k: 768,
            hidden: alloc::vec![512, 256],
            epochs: 150,
            lr_final_ratio: 1.0,
            alpha_dist: 1.0,
            alpha_tan: 1.0,
            ..Self::desk()
        }
    }

    /// Learning-rate multiplier during epoch `epoch` (1-based).
    pub fn lr_factor(&self, epoch: usize) -> f64 {
        if self.epochs <= 1 {
            return 1.0;
        }
        let s = (epoch.saturating_sub(1)) as f64 / (self.epochs - 1) as f64;
        let r = self.lr_final_ratio;
        r + (1.0 - r) * 0.5 * (1.0 + math::cos(core::f64::consts::PI * s))
    }

    pub fn weights(&self) -> LossWeights {
        LossWeights {
            rec: self.alpha_rec,
            dist: self.alpha_dist,
            tan: self.alpha_tan,
        }
    }

    pub fn tangent_form(&self) -> TangentForm {
        if self.orthonormalize_tangents {
            TangentForm::Projector
        } else {
            TangentForm::Gram
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: alloc::string::String| Err(Error::Config(msg));
        if self.neighbors == 0 || self.batch_size <= self.neighbors {
            return bad(alloc::format!(
                "need b > n′ ≥ 1, got b = {}, n′ = {}",
                self.batch_size, self.neighbors
            ));
        }
        if self.latent_dim == 0 || self.pca_k == 0 {
            return bad("latent_dim and pca_k must be positive".into());
        }
        if self.hidden.contains(&0) || self.mapper_hidden == 0 {
            return bad("hidden widths must be positive".into());
        }
        for (name, w) in [("alpha_rec", self.alpha_rec), ("alpha_dist", self.alpha_dist), ("alpha_tan", self.alpha_tan)] {
            if !(w >= 0.0) || !w.is_finite() {
                return bad(alloc::format!("{name} must be a nonnegative number, got {w}"));
            }
        }
        if !(self.lr_final_ratio > 0.0 && self.lr_final_ratio <= 1.0) {
            return bad(alloc::format!("lr_final_ratio must be in (0, 1], got {}", self.lr_final_ratio));
        }
        for (name, lr) in [("lr_g", self.lr_g), ("lr_e", self.lr_e)] {
            if !(lr > 0.0) || !lr.is_finite() {
                return bad(alloc::format!("{name} must be positive, got {lr}"));
            }
        }
        Ok(())
    }
}

fn one() -> f64 {
    1.0
}

/// One row of the training log, from the fixed evaluation batches.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub epoch: usize,
    pub step: usize,
    pub recon: f64,
    pub dist_g: f64,
    pub tan_g: f64,
    pub dist_e: f64,
    pub tan_e: f64,
    pub total: f64,
}

impl LogRow {
    fn is_finite(&self) -> bool {
        [self.recon, self.dist_g, self.tan_g, self.dist_e, self.tan_e, self.total]
            .iter()
            .all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone)]
pub struct Trained {
    pub mapper: GeomMapper,
    pub log: Vec<LogRow>,
}

#[derive(Debug, Clone)]
pub enum TrainError {
    /// Rejected before training started.
    Invalid(Error),
    /// Training diverged; `last_good` is the state after the last clean epoch.
    Diverged {
        error: Error,
        last_good: Box<GeomMapper>,
        log: Vec<LogRow>,
    },
}

impl TrainError {
    pub fn error(&self) -> &Error {
        match self {
            TrainError::Invalid(e) => e,
            TrainError::Diverged { error, .. } => error,
        }
    }
}

impl From<Error> for TrainError {
    fn from(e: Error) -> Self {
        TrainError::Invalid(e)
    }
}

/// Precomputed per-sample training data.
#[derive(Debug, Clone)]
pub struct TrainSet {
    pub coords: Matrix,
    pub residuals: Vec<f64>,
    /// `n′` nearest other samples by rotation, per sample.
    pub neighbors: Vec<Vec<usize>>,
}

impl TrainSet {
    pub fn build(mapper: &GeomMapper, samples: &[PoseSample], n: usize) -> Result<Self> {
        let images = image_rows(samples)?;
        let coords = mapper.coords_rows(&images)?;
        let residuals = (0..samples.len())
            .map(|i| {
                let rec = mapper.uncoords(coords.row(i))?;
                Ok(math::dist2(&rec, images.row(i)))
            })
            .collect::<Result<_>>()?;
        let neighbors = samples
            .iter()
            .enumerate()
            .map(|(i, s)| {
                Ok(nearest_by_rotation(&s.rotation, samples, Some(i), n)?
                    .into_iter()
                    .map(|(_, k)| k)
                    .collect())
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            coords,
            residuals,
            neighbors,
        })
    }

    pub fn batch(&self, idx: &[usize]) -> Batch {
        let nb: Vec<usize> = idx.iter().flat_map(|&i| self.neighbors[i].iter().copied()).collect();
        Batch {
            coords: self.coords.gather_rows(idx),
            residual: idx.iter().map(|&i| self.residuals[i]).sum(),
            neighbors: Some(self.coords.gather_rows(&nb)),
        }
    }
}

/// Flattened images as matrix rows.
pub fn image_rows(samples: &[PoseSample]) -> Result<Matrix> {
    let rows: Vec<&[f64]> = samples.iter().map(|s| s.image.as_slice()).collect();
    Matrix::from_rows(&rows)
}

fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    let data = (0..rows * cols).map(|_| rng::standard_normal(rng)).collect();
    Matrix::from_vec(rows, cols, data).expect("sized")
}

/// Fits PCA and builds an untrained mapper with freshly initialized nets.
pub fn init_mapper(samples: &[PoseSample], shape: ImageShape, cfg: &TrainConfig, rng: &mut ChaCha8Rng) -> Result<GeomMapper> {
    let pca = pca_fit(&image_rows(samples)?, cfg.pca_k)?;
    let top = pca.explained_variance.first().copied().unwrap_or(0.0);
    if !(top > 0.0) {
        return Err(Error::Config("training images have no variance".into()));
    }
    let scale = 1.0 / math::sqrt(top);
    let (k, d) = (cfg.pca_k, cfg.latent_dim);
    let mut enc_dims = alloc::vec![k];
    enc_dims.extend(&cfg.hidden);
    enc_dims.push(d);
    let gen_dims: Vec<usize> = enc_dims.iter().rev().copied().collect();
    let encoder = Mlp::new(&enc_dims, cfg.activation, rng)?;
    let generator = Mlp::new(&gen_dims, cfg.activation, rng)?;
    let mapper = match cfg.mode {
        TrainMode::Autoencoder => None,
        TrainMode::PriorSampling => Some(Mlp::new(&[d, cfg.mapper_hidden, d], cfg.activation, rng)?),
    };
    GeomMapper::new(pca, scale, encoder, generator, mapper, shape)
}

struct EvalPlan {
    batches: Vec<Vec<usize>>,
    prior: Vec<Option<Matrix>>,
}

fn evaluate(m: &GeomMapper, set: &TrainSet, plan: &EvalPlan, cfg: &TrainConfig, epoch: usize, step: usize) -> Result<LogRow> {
    let form = cfg.tangent_form();
    let w = cfg.weights();
    let mut row = LogRow {
        epoch,
        step,
        recon: 0.0,
        dist_g: 0.0,
        tan_g: 0.0,
        dist_e: 0.0,
        tan_e: 0.0,
        total: 0.0,
    };
    let n = plan.batches.len() as f64;
    for (idx, z) in plan.batches.iter().zip(&plan.prior) {
        let batch = set.batch(idx);
        let latent = match (z, &m.mapper) {
            (Some(z), Some(f)) => Some(f.forward(z)?),
            _ => None,
        };
        let g = generator_objective(m, &batch, latent.as_ref(), cfg.neighbors, w, form, false)?;
        let e = encoder_objective(m, &batch, w, form, false)?;
        row.recon += g.terms.recon / n;
        row.dist_g += g.terms.dist / n;
        row.tan_g += g.terms.tan / n;
        row.dist_e += e.terms.dist / n;
        row.tan_e += e.terms.tan / n;
    }
    row.total = w.rec * row.recon + w.dist * (row.dist_g + row.dist_e) + w.tan * (row.tan_g + row.tan_e);
    Ok(row)
}

pub fn train(samples: &[PoseSample], shape: ImageShape, cfg: &TrainConfig) -> core::result::Result<Trained, TrainError> {
    train_with(samples, shape, cfg, &mut |_| {})
}

/// Alternating G and E updates, one of each per batch. `on_epoch` sees each
/// log row as it is produced; row 0 is the untrained state.
pub fn train_with(
    samples: &[PoseSample],
    shape: ImageShape,
    cfg: &TrainConfig,
    on_epoch: &mut dyn FnMut(&LogRow),
) -> core::result::Result<Trained, TrainError> {
    cfg.validate()?;
    if samples.len() < cfg.batch_size {
        return Err(Error::Config(alloc::format!(
            "{} samples cannot fill a batch of {}",
            samples.len(),
            cfg.batch_size
        ))
        .into());
    }
    let mut rng = rng::seeded(cfg.seed);
    let mut mapper = init_mapper(samples, shape, cfg, &mut rng)?.mark_trained();
    let set = TrainSet::build(&mapper, samples, cfg.neighbors)?;
    let b = cfg.batch_size;
    let (d, form, weights) = (cfg.latent_dim, cfg.tangent_form(), cfg.weights());

    let mut order: Vec<usize> = (0..samples.len()).collect();
    order.shuffle(&mut rng);
    let batches: Vec<Vec<usize>> = order.chunks_exact(b).map(<[usize]>::to_vec).collect();
    let prior = batches
        .iter()
        .map(|_| (cfg.mode == TrainMode::PriorSampling).then(|| gaussian(&mut rng, b, d)))
        .collect();
    let plan = EvalPlan { batches, prior };

    let mut opt_g = Optimizer::adam(cfg.lr_g)?;
    let mut opt_e = Optimizer::adam(cfg.lr_e)?;
    let mut log = Vec::with_capacity(cfg.epochs + 1);
    let mut last_good = mapper.clone();
    let mut step = 0usize;

    let first = evaluate(&mapper, &set, &plan, cfg, 0, 0)?;
    if !first.is_finite() {
        return Err(Error::NonFiniteLoss { epoch: 0, step: 0 }.into());
    }
    on_epoch(&first);
    log.push(first);

    let diverged = |error: Error, last_good: &GeomMapper, log: &Vec<LogRow>| TrainError::Diverged {
        error,
        last_good: Box::new(last_good.clone()),
        log: log.clone(),
    };

    let mut idx: Vec<usize> = (0..samples.len()).collect();
    for epoch in 1..=cfg.epochs {
        let f = cfg.lr_factor(epoch);
        opt_g.set_learning_rate(cfg.lr_g * f);
        opt_e.set_learning_rate(cfg.lr_e * f);
        idx.shuffle(&mut rng);
        for chunk in idx.chunks_exact(b) {
            let batch = set.batch(chunk);
            let latent = match &mapper.mapper {
                Some(f) => Some(f.forward(&gaussian(&mut rng, b, d)).map_err(|e| diverged(e, &last_good, &log))?),
                None => None,
            };
            let non_finite = || Error::NonFiniteLoss { epoch, step };
            let g = generator_objective(&mapper, &batch, latent.as_ref(), cfg.neighbors, weights, form, true)
                .map_err(|e| diverged(e, &last_good, &log))?;
            if !g.value().is_finite() {
                return Err(diverged(non_finite(), &last_good, &log));
            }
            opt_g
                .step(&mut mapper.generator, &g.grads)
                .map_err(|e| diverged(e, &last_good, &log))?;
            let e = encoder_objective(&mapper, &batch, weights, form, true).map_err(|e| diverged(e, &last_good, &log))?;
            if !e.value().is_finite() {
                return Err(diverged(non_finite(), &last_good, &log));
            }
            opt_e
                .step(&mut mapper.encoder, &e.grads)
                .map_err(|e| diverged(e, &last_good, &log))?;
            step += 1;
        }
        let row = evaluate(&mapper, &set, &plan, cfg, epoch, step).map_err(|e| diverged(e, &last_good, &log))?;
        if !row.is_finite() {
            return Err(diverged(Error::NonFiniteLoss { epoch, step }, &last_good, &log));
        }
        on_epoch(&row);
        log.push(row);
        last_good = mapper.clone();
    }
    Ok(Trained { mapper, log })
}
