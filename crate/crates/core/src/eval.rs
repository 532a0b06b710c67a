//! Path interpolation through a trained mapper, error metrics against
//! rendered ground truth, baselines, and manifold denoising.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write;

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::dataset::{so3_distance, Dataset, Image, PoseSample, Rotation};
use crate::elastica::{pick_directions, resample_uniform, solve_free_elastica, DirectedPoint, Directions, ElasticaCurve, ElasticaParams};
use crate::embed::GeomMapper;
use crate::error::{Error, Result};
use crate::math;
use crate::rng;
use crate::tangent::{estimate_tangents_at, pushforward, DEFAULT_PUSHFORWARD_EPS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Elastica,
    LinearLatent,
    LinearImage,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Elastica, Method::LinearLatent, Method::LinearImage];

    pub fn tag(self) -> &'static str {
        match self {
            Method::Elastica => "elastica",
            Method::LinearLatent => "linear-latent",
            Method::LinearImage => "linear-image",
        }
    }
}

impl core::fmt::Display for Method {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.tag())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathResult {
    pub method: Method,
    pub frames: Vec<Image>,
    /// Latent points behind the interior frames; empty for the pixel baseline.
    pub latent: Vec<Vec<f64>>,
    pub curve: Option<ElasticaCurve>,
    pub directions: Option<Directions>,
    pub image_se: Vec<f64>,
    pub velocity_se: Vec<f64>,
    pub pair: (Rotation, Rotation),
}

impl PathResult {
    /// Mean SE over the interior frames.
    pub fn interior_se(&self) -> f64 {
        interior_mean(&self.image_se)
    }

    pub fn mean_velocity_se(&self) -> f64 {
        if self.velocity_se.is_empty() {
            0.0
        } else {
            self.velocity_se.iter().sum::<f64>() / self.velocity_se.len() as f64
        }
    }
}

fn interior_mean(se: &[f64]) -> f64 {
    if se.len() <= 2 {
        return 0.0;
    }
    se[1..se.len() - 1].iter().sum::<f64>() / (se.len() - 2) as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InterpConfig {
    pub lambda: f64,
    pub m: usize,
    pub tol: f64,
    pub max_iters: usize,
    /// Training neighbors per endpoint for the image tangent.
    pub tangent_neighbors: usize,
    pub tangent_rank: usize,
    pub pushforward_eps: f64,
}

impl Default for InterpConfig {
    fn default() -> Self {
        let p = ElasticaParams::default();
        Self {
            lambda: p.lambda,
            m: p.m,
            tol: p.tol,
            max_iters: p.max_iters,
            tangent_neighbors: 2,
            tangent_rank: 1,
            pushforward_eps: DEFAULT_PUSHFORWARD_EPS,
        }
    }
}

impl InterpConfig {
    pub fn elastica(&self) -> ElasticaParams {
        ElasticaParams {
            lambda: self.lambda,
            m: self.m,
            max_iters: self.max_iters,
            tol: self.tol,
        }
    }
}

/// Per-frame squared error `‖aₜ − bₜ‖²`.
pub fn image_se(frames: &[Image], gt: &[Image]) -> Result<Vec<f64>> {
    if frames.len() != gt.len() {
        return Err(Error::ShapeMismatch {
            context: "image_se frame count",
            expected: (gt.len(), 1),
            got: (frames.len(), 1),
        });
    }
    frames.iter().zip(gt).map(|(a, b)| a.se(b)).collect()
}

/// Squared error of temporal differences, length `T − 1`.
pub fn velocity_se(frames: &[Image], gt: &[Image]) -> Result<Vec<f64>> {
    if frames.len() != gt.len() {
        return Err(Error::ShapeMismatch {
            context: "velocity_se frame count",
            expected: (gt.len(), 1),
            got: (frames.len(), 1),
        });
    }
    if frames.len() < 2 {
        return Err(Error::Config("velocity error needs at least 2 frames".into()));
    }
    (0..frames.len() - 1)
        .map(|t| {
            let (a0, a1, b0, b1) = (&frames[t], &frames[t + 1], &gt[t], &gt[t + 1]);
            if a0.shape() != b0.shape() || a1.shape() != b1.shape() || a0.shape() != a1.shape() {
                return Err(Error::ShapeMismatch {
                    context: "velocity_se frame",
                    expected: (1, b0.shape().len()),
                    got: (1, a0.shape().len()),
                });
            }
            let mut s = 0.0;
            for i in 0..a0.as_slice().len() {
                let d = (a1.as_slice()[i] - a0.as_slice()[i]) - (b1.as_slice()[i] - b0.as_slice()[i]);
                s += d * d;
            }
            Ok(s)
        })
        .collect()
}

fn with_path<T>(r: Result<T>, a: &PoseSample, b: &PoseSample) -> Result<T> {
    r.map_err(|e| {
        e.context(alloc::format!(
            "path {:?} {:.2}° → {:?} {:.2}°",
            a.axis, a.angle_deg, b.axis, b.angle_deg
        ))
    })
}

fn finish(method: Method, mut frames: Vec<Image>, latent: Vec<Vec<f64>>, a: &PoseSample, b: &PoseSample, gt: &[Image]) -> Result<PathResult> {
    let t = frames.len();
    frames[0] = gt[0].clone();
    frames[t - 1] = gt[t - 1].clone();
    Ok(PathResult {
        method,
        image_se: image_se(&frames, gt)?,
        velocity_se: velocity_se(&frames, gt)?,
        frames,
        latent,
        curve: None,
        directions: None,
        pair: (a.rotation, b.rotation),
    })
}

fn check_frames(t: usize) -> Result<()> {
    if t < 2 {
        return Err(Error::Config(alloc::format!("paths need T ≥ 2 frames, got {t}")));
    }
    Ok(())
}

fn same_pose(a: &PoseSample, b: &PoseSample) -> bool {
    so3_distance(&a.rotation, &b.rotation) < 1e-12
}

fn constant_path(method: Method, a: &PoseSample, t: usize) -> PathResult {
    PathResult {
        method,
        frames: alloc::vec![a.image.clone(); t],
        latent: Vec::new(),
        curve: None,
        directions: None,
        image_se: alloc::vec![0.0; t],
        velocity_se: alloc::vec![0.0; t - 1],
        pair: (a.rotation, a.rotation),
    }
}

/// Training pool for tangent estimation at `p`: the training poses from the
/// same sweep when `p` lies on one, with `p` itself left out.
fn tangent_pool(dataset: &Dataset, p: &PoseSample) -> Vec<PoseSample> {
    dataset
        .train
        .iter()
        .filter(|s| p.axis.is_none() || s.axis == p.axis)
        .filter(|s| so3_distance(&s.rotation, &p.rotation) >= 1e-12)
        .cloned()
        .collect()
}

/// Latent directed point at a posed image.
fn latent_tangent(mapper: &GeomMapper, dataset: &Dataset, p: &PoseSample, cfg: &InterpConfig) -> Result<crate::tangent::TangentBasis> {
    let pool = tangent_pool(dataset, p);
    let t = estimate_tangents_at(&p.rotation, p.image.as_slice(), &pool, None, cfg.tangent_neighbors, cfg.tangent_rank)?;
    pushforward(mapper, p.image.as_slice(), &t, cfg.pushforward_eps)
}

/// Elastica interpolation from `a` to `b` with `t` frames.
pub fn interpolate_path(mapper: &GeomMapper, dataset: &Dataset, a: &PoseSample, b: &PoseSample, t: usize, cfg: &InterpConfig) -> Result<PathResult> {
    check_frames(t)?;
    if same_pose(a, b) {
        return Ok(constant_path(Method::Elastica, a, t));
    }
    with_path(
        (|| {
            let t1 = latent_tangent(mapper, dataset, a, cfg)?;
            let t2 = latent_tangent(mapper, dataset, b, cfg)?;
            let (w1, w2) = (t1.base.clone(), t2.base.clone());
            let dirs = pick_directions(&w1, &t1, &w2, &t2)?;
            let p1 = DirectedPoint::new(w1, dirs.v1.clone())?;
            let p2 = DirectedPoint::new(w2, dirs.u2.clone())?;
            let curve = solve_free_elastica(&p1, &p2, cfg.elastica())?;
            let latent = resample_uniform(&curve.points, t)?;
            let frames = latent.iter().map(|w| mapper.phi_inv(w)).collect::<Result<Vec<_>>>()?;
            let gt = dataset.ground_truth_path(&a.rotation, &b.rotation, t)?;
            let mut r = finish(Method::Elastica, frames, latent, a, b, &gt)?;
            r.curve = Some(curve);
            r.directions = Some(dirs);
            Ok(r)
        })(),
        a,
        b,
    )
}

/// Straight line between the endpoint codes, decoded.
pub fn baseline_linear_latent(mapper: &GeomMapper, dataset: &Dataset, a: &PoseSample, b: &PoseSample, t: usize) -> Result<PathResult> {
    check_frames(t)?;
    if same_pose(a, b) {
        return Ok(constant_path(Method::LinearLatent, a, t));
    }
    with_path(
        (|| {
            let (w1, w2) = (mapper.phi(&a.image)?, mapper.phi(&b.image)?);
            let latent: Vec<Vec<f64>> = (0..t)
                .map(|k| {
                    let s = k as f64 / (t - 1) as f64;
                    w1.iter().zip(&w2).map(|(x, y)| x + s * (y - x)).collect()
                })
                .collect();
            let frames = latent.iter().map(|w| mapper.phi_inv(w)).collect::<Result<Vec<_>>>()?;
            let gt = dataset.ground_truth_path(&a.rotation, &b.rotation, t)?;
            finish(Method::LinearLatent, frames, latent, a, b, &gt)
        })(),
        a,
        b,
    )
}

/// Pixel-space cross-fade between the endpoint images.
pub fn baseline_linear_image(dataset: &Dataset, a: &PoseSample, b: &PoseSample, t: usize) -> Result<PathResult> {
    check_frames(t)?;
    if same_pose(a, b) {
        return Ok(constant_path(Method::LinearImage, a, t));
    }
    with_path(
        (|| {
            let frames = (0..t)
                .map(|k| a.image.lerp(&b.image, k as f64 / (t - 1) as f64))
                .collect::<Result<Vec<_>>>()?;
            let gt = dataset.ground_truth_path(&a.rotation, &b.rotation, t)?;
            finish(Method::LinearImage, frames, Vec::new(), a, b, &gt)
        })(),
        a,
        b,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteConfig {
    pub n_paths: usize,
    /// Frames per path, endpoints included.
    pub frames: usize,
    pub angle_min_deg: f64,
    pub angle_max_deg: f64,
    pub seed: u64,
}

impl SuiteConfig {
    pub fn desk() -> Self {
        Self {
            n_paths: 20,
            frames: 10,
            angle_min_deg: 20.0,
            angle_max_deg: 40.0,
            seed: 0,
        }
    }

    /// 114 paths with eight intermediate samples, 15° to 40°.
    pub fn paper() -> Self {
        Self {
            n_paths: 114,
            frames: 10,
            angle_min_deg: 15.0,
            angle_max_deg: 40.0,
            seed: 0,
        }
    }
}

/// Test-pose index pairs on a common sweep with gap in range.
pub fn candidate_pairs(dataset: &Dataset, min_deg: f64, max_deg: f64) -> Vec<(usize, usize)> {
    let test = &dataset.test;
    let mut out = Vec::new();
    for i in 0..test.len() {
        for j in i + 1..test.len() {
            if test[i].axis.is_none() || test[i].axis != test[j].axis {
                continue;
            }
            let gap = so3_distance(&test[i].rotation, &test[j].rotation).to_degrees();
            if gap >= min_deg && gap <= max_deg {
                out.push((i, j));
            }
        }
    }
    out
}

/// `n_paths` pairs drawn uniformly without replacement, in candidate order.
pub fn suite_pairs(dataset: &Dataset, cfg: &SuiteConfig) -> Result<Vec<(usize, usize)>> {
    if !(cfg.angle_min_deg <= cfg.angle_max_deg) || cfg.n_paths == 0 {
        return Err(Error::Config("suite needs n_paths ≥ 1 and angle_min ≤ angle_max".into()));
    }
    let all = candidate_pairs(dataset, cfg.angle_min_deg, cfg.angle_max_deg);
    if all.len() < cfg.n_paths {
        return Err(Error::Config(alloc::format!(
            "only {} test pairs with gap in [{}°, {}°], need {}",
            all.len(),
            cfg.angle_min_deg,
            cfg.angle_max_deg,
            cfg.n_paths
        )));
    }
    let mut r = rng::seeded(cfg.seed);
    let mut pick = index::sample(&mut r, all.len(), cfg.n_paths).into_vec();
    pick.sort_unstable();
    Ok(pick.into_iter().map(|k| all[k]).collect())
}

/// The three methods on one test pair.
#[derive(Debug, Clone, PartialEq)]
pub struct PairResult {
    pub pair: (usize, usize),
    pub gap_deg: f64,
    pub paths: Vec<PathResult>,
}

impl PairResult {
    pub fn path(&self, method: Method) -> Option<&PathResult> {
        self.paths.iter().find(|p| p.method == method)
    }
}

pub fn evaluate_pair(mapper: &GeomMapper, dataset: &Dataset, pair: (usize, usize), frames: usize, cfg: &InterpConfig) -> Result<PairResult> {
    let (a, b) = (
        dataset.test.get(pair.0).ok_or_else(|| Error::Config(alloc::format!("no test pose {}", pair.0)))?,
        dataset.test.get(pair.1).ok_or_else(|| Error::Config(alloc::format!("no test pose {}", pair.1)))?,
    );
    Ok(PairResult {
        pair,
        gap_deg: so3_distance(&a.rotation, &b.rotation).to_degrees(),
        paths: alloc::vec![
            interpolate_path(mapper, dataset, a, b, frames, cfg)?,
            baseline_linear_latent(mapper, dataset, a, b, frames)?,
            baseline_linear_image(dataset, a, b, frames)?,
        ],
    })
}

/// One CSV row: statistics of image SE and velocity SE at frame `t` over
/// the suite. `mean_ev`/`std_ev` are absent at the last frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub method: Method,
    pub t: usize,
    pub mean_se: f64,
    pub std_se: f64,
    pub mean_ev: Option<f64>,
    pub std_ev: Option<f64>,
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, math::sqrt(var))
}

/// Per-method, per-frame statistics; independent of the order of `results`.
pub fn summarize(results: &[PairResult]) -> Result<Vec<SummaryRow>> {
    let mut sorted: Vec<&PairResult> = results.iter().collect();
    sorted.sort_by_key(|r| r.pair);
    let Some(first) = sorted.first() else {
        return Err(Error::Config("no paths to summarize".into()));
    };
    let frames = first.paths[0].image_se.len();
    let mut rows = Vec::new();
    for method in Method::ALL {
        let paths: Vec<&PathResult> = sorted.iter().filter_map(|r| r.path(method)).collect();
        if paths.is_empty() {
            continue;
        }
        for t in 0..frames {
            let se: Vec<f64> = paths.iter().map(|p| p.image_se[t]).collect();
            let (mean_se, std_se) = mean_std(&se);
            let (mean_ev, std_ev) = if t + 1 < frames {
                let ev: Vec<f64> = paths.iter().map(|p| p.velocity_se[t]).collect();
                let (m, s) = mean_std(&ev);
                (Some(m), Some(s))
            } else {
                (None, None)
            };
            rows.push(SummaryRow {
                method,
                t,
                mean_se,
                std_se,
                mean_ev,
                std_ev,
            });
        }
    }
    Ok(rows)
}

pub const SUMMARY_HEADER: &str = "method,t,mean_se,std_se,mean_ev,std_ev";

pub fn summary_csv(rows: &[SummaryRow]) -> String {
    let mut s = String::from(SUMMARY_HEADER);
    s.push('\n');
    let opt = |v: Option<f64>| v.map(|x| alloc::format!("{x:.9e}")).unwrap_or_default();
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{:.9e},{:.9e},{},{}",
            r.method,
            r.t,
            r.mean_se,
            r.std_se,
            opt(r.mean_ev),
            opt(r.std_ev)
        );
    }
    s
}

/// Suite-level aggregates for one method.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MethodScore {
    pub method: Method,
    pub interior_se: f64,
    pub velocity_se: f64,
}

pub fn method_scores(results: &[PairResult]) -> Vec<MethodScore> {
    Method::ALL
        .iter()
        .filter_map(|&method| {
            let paths: Vec<&PathResult> = results.iter().filter_map(|r| r.path(method)).collect();
            (!paths.is_empty()).then(|| MethodScore {
                method,
                interior_se: paths.iter().map(|p| p.interior_se()).sum::<f64>() / paths.len() as f64,
                velocity_se: paths.iter().map(|p| p.mean_velocity_se()).sum::<f64>() / paths.len() as f64,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteReport {
    pub results: Vec<PairResult>,
    pub summary: Vec<SummaryRow>,
    pub scores: Vec<MethodScore>,
}

impl SuiteReport {
    pub fn from_results(mut results: Vec<PairResult>) -> Result<Self> {
        results.sort_by_key(|r| r.pair);
        Ok(Self {
            summary: summarize(&results)?,
            scores: method_scores(&results),
            results,
        })
    }

    pub fn score(&self, method: Method) -> Option<MethodScore> {
        self.scores.iter().copied().find(|s| s.method == method)
    }

    pub fn csv(&self) -> String {
        summary_csv(&self.summary)
    }

    /// Elastica paths, the default denoising bank.
    pub fn elastica_bank(&self) -> Vec<PathResult> {
        self.results.iter().filter_map(|r| r.path(Method::Elastica).cloned()).collect()
    }
}

/// Sequential suite run; see [`evaluate_pair`] for a parallel driver.
pub fn evaluate_suite(mapper: &GeomMapper, dataset: &Dataset, suite: &SuiteConfig, cfg: &InterpConfig) -> Result<SuiteReport> {
    let pairs = suite_pairs(dataset, suite)?;
    let results = pairs
        .into_iter()
        .map(|p| evaluate_pair(mapper, dataset, p, suite.frames, cfg))
        .collect::<Result<Vec<_>>>()?;
    SuiteReport::from_results(results)
}

/// Latent points searched by [`denoise`]: each elastica curve resampled at
/// `density` points, or the stored latent samples for other paths.
pub fn bank_points(bank: &[PathResult], density: usize) -> Result<Vec<Vec<f64>>> {
    let mut out = Vec::new();
    for p in bank {
        match &p.curve {
            Some(c) => out.extend(resample_uniform(&c.points, density)?),
            None => out.extend(p.latent.iter().cloned()),
        }
    }
    Ok(out)
}

pub const DEFAULT_BANK_DENSITY: usize = 200;

/// Nearest bank point to `Φ(noisy)`, decoded.
pub fn denoise(mapper: &GeomMapper, noisy: &Image, bank: &[PathResult]) -> Result<Image> {
    let points = bank_points(bank, DEFAULT_BANK_DENSITY)?;
    denoise_with(mapper, noisy, &points)
}

pub fn denoise_with(mapper: &GeomMapper, noisy: &Image, points: &[Vec<f64>]) -> Result<Image> {
    if points.is_empty() {
        return Err(Error::Config("denoising needs a nonempty path bank".into()));
    }
    let w = mapper.phi(noisy)?;
    let best = points
        .iter()
        .map(|p| math::dist2(p, &w))
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
        .map(|(k, _)| k)
        .unwrap();
    mapper.phi_inv(&points[best])
}

#[cfg(test)]
mod tests;
