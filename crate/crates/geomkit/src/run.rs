//! The experiment pipeline behind each subcommand.

use std::path::{Path, PathBuf};

use geomkit_core::checks::{all_checks, Check};
use geomkit_core::dataset::{Dataset, Image};
use geomkit_core::embed::{train_with, GeomMapper, LogRow, TrainError};
use geomkit_core::eval::{
    baseline_linear_image, baseline_linear_latent, bank_points, denoise_with, evaluate_pair, interpolate_path, suite_pairs,
    MethodScore, PathResult, SuiteReport, DEFAULT_BANK_DENSITY,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{KitError, Result};
use crate::formats::{self, checkpoint, csv, hash::content_hash, pnm, tensor::Tensor};
use crate::store;

pub const CODE_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Binds a checkpoint to its config, dataset and parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sidecar {
    pub code_version: String,
    pub config: RunConfig,
    pub config_hash: String,
    pub data_dir: PathBuf,
    pub manifest_hash: String,
    pub checkpoint_hash: String,
    pub pca_k: usize,
    pub explained_variance: Vec<f64>,
    pub epochs_completed: usize,
}

/// Record of an evaluation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub code_version: String,
    pub config_hash: String,
    pub seeds: Seeds,
    pub manifest_hash: String,
    pub checkpoint_hash: String,
    pub summary_hash: String,
    pub pairs: Vec<(usize, usize)>,
    pub scores: Vec<MethodScore>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Seeds {
    pub dataset: u64,
    pub train: u64,
    pub eval: u64,
}

impl Seeds {
    fn of(cfg: &RunConfig) -> Self {
        Self { dataset: cfg.dataset.seed, train: cfg.train.seed, eval: cfg.eval.seed }
    }
}

pub fn sidecar_path(ckpt: &Path) -> PathBuf {
    with_suffix(ckpt, ".json")
}

pub fn log_path(ckpt: &Path) -> PathBuf {
    with_suffix(ckpt, ".log.csv")
}

fn with_suffix(p: &Path, suffix: &str) -> PathBuf {
    let mut s = p.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| KitError::json(path.display().to_string(), e))?;
    bytes.push(b'\n');
    formats::write(path, &bytes)
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    serde_json::from_slice(&formats::read(path)?).map_err(|e| KitError::json(path.display().to_string(), e))
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| KitError::Config(format!("thread pool: {e}")))
}

/// Renders and writes the dataset; returns the manifest hash.
pub fn gen_data(cfg: &RunConfig, out: &Path, force: bool, jobs: usize) -> Result<String> {
    let data = pool(jobs)?.install(|| store::build(cfg))?;
    store::write(&data, out, force)
}

pub struct TrainOutcome {
    pub mapper: GeomMapper,
    pub log: Vec<LogRow>,
    pub sidecar: Sidecar,
}

fn save_checkpoint(
    cfg: &RunConfig,
    data_dir: &Path,
    manifest_hash: &str,
    mapper: &GeomMapper,
    log: &[LogRow],
    ckpt: &Path,
) -> Result<Sidecar> {
    let bytes = checkpoint::save(ckpt, mapper)?;
    formats::write(&log_path(ckpt), csv::training_log(log).as_bytes())?;
    let sidecar = Sidecar {
        code_version: CODE_VERSION.into(),
        config: cfg.clone(),
        config_hash: cfg.hash(),
        data_dir: data_dir.to_path_buf(),
        manifest_hash: manifest_hash.into(),
        checkpoint_hash: content_hash(&bytes),
        pca_k: mapper.pca_k(),
        explained_variance: mapper.pca.explained_variance.clone(),
        epochs_completed: log.last().map_or(0, |r| r.epoch),
    };
    write_json(&sidecar_path(ckpt), &sidecar)?;
    Ok(sidecar)
}

/// Trains on the dataset in `data_dir` and writes the checkpoint, its
/// sidecar and the training log. On divergence the last clean state is
/// written before the error is returned.
pub fn train(cfg: &RunConfig, data_dir: &Path, ckpt: &Path, progress: &mut dyn FnMut(&LogRow)) -> Result<TrainOutcome> {
    let (data, manifest_hash) = store::load(data_dir)?;
    if data.shape != cfg.shape() || data.grid != cfg.dataset.grid || data.object.kind != cfg.dataset.kind {
        return Err(KitError::Config(format!("{} was generated from a different config", data_dir.display())));
    }
    let tc = cfg.train_config();
    match train_with(&data.train, data.shape, &tc, progress) {
        Ok(t) => {
            let sidecar = save_checkpoint(cfg, data_dir, &manifest_hash, &t.mapper, &t.log, ckpt)?;
            Ok(TrainOutcome { mapper: t.mapper, log: t.log, sidecar })
        }
        Err(TrainError::Diverged { error, last_good, log }) => {
            save_checkpoint(cfg, data_dir, &manifest_hash, &last_good, &log, ckpt)?;
            Err(KitError::Diverged(error))
        }
        Err(e) => Err(e.into()),
    }
}

/// A checkpoint with its sidecar.
pub struct Loaded {
    pub mapper: GeomMapper,
    pub sidecar: Sidecar,
}

pub fn load_checkpoint(ckpt: &Path) -> Result<Loaded> {
    let bytes = formats::read(ckpt)?;
    let sidecar: Sidecar = read_json(&sidecar_path(ckpt))?;
    if content_hash(&bytes) != sidecar.checkpoint_hash {
        return Err(KitError::format(ckpt, "checkpoint does not match the hash in its sidecar"));
    }
    sidecar.config.validate()?;
    Ok(Loaded { mapper: checkpoint::decode(&bytes, ckpt)?, sidecar })
}

/// The dataset a checkpoint was trained on, checked against its hash.
pub fn load_bound_dataset(loaded: &Loaded, data_dir: Option<&Path>) -> Result<Dataset> {
    let dir = data_dir.unwrap_or(&loaded.sidecar.data_dir);
    let (data, hash) = store::load(dir)?;
    if hash != loaded.sidecar.manifest_hash {
        return Err(KitError::Config(format!(
            "{} is not the dataset this checkpoint was trained on",
            dir.display()
        )));
    }
    Ok(data)
}

fn write_frames(dir: &Path, frames: &[Image]) -> Result<()> {
    for (k, f) in frames.iter().enumerate() {
        pnm::write(&dir.join(pnm::frame_name(k, f.shape().channels)), f)?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathSummary {
    pub method: String,
    pub pair: (usize, usize),
    pub image_se: Vec<f64>,
    pub velocity_se: Vec<f64>,
    pub interior_se: f64,
    pub mean_velocity_se: f64,
    pub converged: Option<bool>,
}

fn summary_of(p: &PathResult, pair: (usize, usize)) -> PathSummary {
    PathSummary {
        method: p.method.tag().into(),
        pair,
        image_se: p.image_se.clone(),
        velocity_se: p.velocity_se.clone(),
        interior_se: p.interior_se(),
        mean_velocity_se: p.mean_velocity_se(),
        converged: p.curve.as_ref().map(|c| c.converged),
    }
}

/// Interpolates between test poses `i` and `j`; writes frames for every
/// method and the ground truth, the elastica curve and per-path metrics.
pub fn interpolate(ckpt: &Path, data_dir: Option<&Path>, i: usize, j: usize, frames: usize, out: &Path) -> Result<Vec<PathResult>> {
    let loaded = load_checkpoint(ckpt)?;
    let data = load_bound_dataset(&loaded, data_dir)?;
    let get = |k: usize| {
        data.test
            .get(k)
            .ok_or_else(|| KitError::Config(format!("test pose {k} out of range 0..{}", data.test.len())))
    };
    let (a, b) = (get(i)?, get(j)?);
    let cfg = loaded.sidecar.config.interp_config();
    let m = &loaded.mapper;
    let paths = vec![
        interpolate_path(m, &data, a, b, frames, &cfg)?,
        baseline_linear_latent(m, &data, a, b, frames)?,
        baseline_linear_image(&data, a, b, frames)?,
    ];
    write_frames(out, &paths[0].frames)?;
    for p in &paths[1..] {
        write_frames(&out.join(p.method.tag()), &p.frames)?;
    }
    write_frames(&out.join("ground-truth"), &data.ground_truth_path(&a.rotation, &b.rotation, frames)?)?;
    if let Some(c) = &paths[0].curve {
        formats::write(&out.join("curve.csv"), csv::curve(&c.points).as_bytes())?;
    }
    let summaries: Vec<PathSummary> = paths.iter().map(|p| summary_of(p, (i, j))).collect();
    write_json(&out.join("path.json"), &summaries)?;
    Ok(paths)
}

pub fn bank_path(csv_out: &Path) -> PathBuf {
    csv_out.with_extension("bank.gstn")
}

pub fn run_manifest_path(csv_out: &Path) -> PathBuf {
    csv_out.with_extension("run.json")
}

/// Runs the path suite with `jobs` workers. Writes the summary CSV, the
/// run manifest and the elastica point bank next to it.
pub fn eval(ckpt: &Path, data_dir: Option<&Path>, out: &Path, config: Option<&RunConfig>, jobs: usize) -> Result<SuiteReport> {
    let loaded = load_checkpoint(ckpt)?;
    let data = load_bound_dataset(&loaded, data_dir)?;
    let cfg = config.unwrap_or(&loaded.sidecar.config);
    let (suite, interp) = (cfg.suite_config(), cfg.interp_config());
    let pairs = suite_pairs(&data, &suite)?;
    let m = &loaded.mapper;
    let results = pool(jobs)?.install(|| {
        pairs
            .par_iter()
            .map(|&p| evaluate_pair(m, &data, p, suite.frames, &interp))
            .collect::<geomkit_core::Result<Vec<_>>>()
    })?;
    let report = SuiteReport::from_results(results)?;
    let csv_text = report.csv();
    formats::write(out, csv_text.as_bytes())?;
    let points = bank_points(&report.elastica_bank(), DEFAULT_BANK_DENSITY)?;
    let d = m.latent_dim();
    let bank = Tensor::new(vec![points.len(), d], points.concat())?;
    bank.write(&bank_path(out))?;
    let manifest = RunManifest {
        code_version: CODE_VERSION.into(),
        config_hash: cfg.hash(),
        seeds: Seeds::of(cfg),
        manifest_hash: loaded.sidecar.manifest_hash.clone(),
        checkpoint_hash: loaded.sidecar.checkpoint_hash.clone(),
        summary_hash: content_hash(csv_text.as_bytes()),
        pairs: report.results.iter().map(|r| r.pair).collect(),
        scores: report.scores.clone(),
    };
    write_json(&run_manifest_path(out), &manifest)?;
    Ok(report)
}

/// Projects `image` onto the nearest point of the latent bank and decodes.
pub fn denoise(ckpt: &Path, image: &Path, bank: &Path, out: &Path) -> Result<Image> {
    let loaded = load_checkpoint(ckpt)?;
    let noisy = pnm::read(image)?;
    if noisy.shape() != loaded.mapper.shape {
        return Err(KitError::Config(format!(
            "image shape {:?} does not match the checkpoint's {:?}",
            noisy.shape(),
            loaded.mapper.shape
        )));
    }
    let t = Tensor::read(bank)?;
    let d = loaded.mapper.latent_dim();
    if t.dims.len() != 2 || t.dims[1] != d || t.dims[0] == 0 {
        return Err(KitError::format(bank, format!("expected a nonempty n x {d} bank, got dims {:?}", t.dims)));
    }
    let points: Vec<Vec<f64>> = t.data.chunks_exact(d).map(<[f64]>::to_vec).collect();
    let clean = denoise_with(&loaded.mapper, &noisy, &points)?;
    pnm::write(out, &clean)?;
    Ok(clean)
}

/// Gradient, invariance, elastica and tangent checks.
pub fn selfcheck() -> Result<Vec<Check>> {
    Ok(all_checks()?)
}
