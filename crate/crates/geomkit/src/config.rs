//! Run configuration: one JSON document with every knob of a run.

use std::path::Path;

use geomkit_core::dataset::{Axis, GridSpec, ImageShape, ObjectKind};
use geomkit_core::elastica::ElasticaParams;
use geomkit_core::embed::{TrainConfig, TrainMode};
use geomkit_core::eval::{InterpConfig, SuiteConfig};
use geomkit_core::netcore::Activation;
use serde::{Deserialize, Serialize};

use crate::error::{KitError, Result};
use crate::formats::hash::sha256_hex;

pub const SEED_ENV: &str = "GEOMKIT_SEED";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: DatasetSection,
    pub pca: PcaSection,
    pub train: TrainSection,
    pub elastica: ElasticaSection,
    pub eval: EvalSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSection {
    pub kind: ObjectKind,
    pub seed: u64,
    /// Square image side in pixels.
    pub size: usize,
    pub channels: usize,
    pub grid: GridSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PcaSection {
    pub k: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Weights {
    pub rec: f64,
    pub dist: f64,
    pub tan: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    /// Batch size.
    pub b: usize,
    /// Latent dimension.
    pub d: usize,
    /// Tangent neighbors per point.
    pub n_prime: usize,
    pub epochs: usize,
    pub lr_g: f64,
    pub lr_e: f64,
    #[serde(default = "one")]
    pub lr_final_ratio: f64,
    pub weights: Weights,
    pub mode: TrainMode,
    pub seed: u64,
    pub hidden: Vec<usize>,
    pub activation: Activation,
    #[serde(default)]
    pub orthonormalize_tangents: bool,
    #[serde(default = "default_mapper_hidden")]
    pub mapper_hidden: usize,
}

fn one() -> f64 {
    1.0
}

fn default_mapper_hidden() -> usize {
    32
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ElasticaSection {
    pub lambda: f64,
    pub m: usize,
    pub tol: f64,
    pub max_iters: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSection {
    pub n_paths: usize,
    #[serde(rename = "T")]
    pub frames: usize,
    pub angle_min_deg: f64,
    pub angle_max_deg: f64,
    pub seed: u64,
    pub tangent_neighbors: usize,
    pub tangent_rank: usize,
    pub pushforward_eps: f64,
}

impl RunConfig {
    pub fn desk() -> Self {
        let t = TrainConfig::desk();
        let interp = InterpConfig::default();
        let suite = SuiteConfig::desk();
        let e = ElasticaParams::default();
        Self {
            dataset: DatasetSection {
                kind: ObjectKind::Chairlike,
                seed: 7,
                size: 48,
                channels: 1,
                grid: GridSpec::new(Axis::ALL.to_vec(), 80, 160, 180.0),
            },
            pca: PcaSection { k: t.pca_k },
            train: TrainSection {
                b: t.batch_size,
                d: t.latent_dim,
                n_prime: t.neighbors,
                epochs: t.epochs,
                lr_g: t.lr_g,
                lr_e: t.lr_e,
                lr_final_ratio: t.lr_final_ratio,
                weights: Weights { rec: t.alpha_rec, dist: t.alpha_dist, tan: t.alpha_tan },
                mode: t.mode,
                seed: t.seed,
                hidden: t.hidden,
                activation: t.activation,
                orthonormalize_tangents: t.orthonormalize_tangents,
                mapper_hidden: t.mapper_hidden,
            },
            elastica: ElasticaSection { lambda: interp.lambda, m: interp.m, tol: e.tol, max_iters: e.max_iters },
            eval: EvalSection {
                n_paths: suite.n_paths,
                frames: suite.frames,
                angle_min_deg: suite.angle_min_deg,
                angle_max_deg: suite.angle_max_deg,
                seed: suite.seed,
                tangent_neighbors: interp.tangent_neighbors,
                tangent_rank: interp.tangent_rank,
                pushforward_eps: interp.pushforward_eps,
            },
        }
    }

    pub fn paper() -> Self {
        let t = TrainConfig::paper();
        let suite = SuiteConfig::paper();
        let mut c = Self::desk();
        c.dataset.size = 128;
        c.dataset.channels = 3;
        c.dataset.grid = GridSpec::new(Axis::ALL.to_vec(), 400, 1200, 180.0);
        c.pca.k = t.pca_k;
        c.train.b = t.batch_size;
        c.train.d = t.latent_dim;
        c.train.n_prime = t.neighbors;
        c.train.hidden = t.hidden;
        c.eval.n_paths = suite.n_paths;
        c.eval.frames = suite.frames;
        c.eval.angle_min_deg = suite.angle_min_deg;
        c.eval.angle_max_deg = suite.angle_max_deg;
        c
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "desk" => Some(Self::desk()),
            "paper" => Some(Self::paper()),
            _ => None,
        }
    }

    pub fn from_json(text: &str, origin: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| KitError::json(origin, e))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// A preset name, or a path to a JSON file. Applies the seed override.
    pub fn load(spec: &str) -> Result<Self> {
        let mut cfg = match Self::preset(spec) {
            Some(c) if !Path::new(spec).exists() => c,
            _ => {
                let path = Path::new(spec);
                let text = std::fs::read_to_string(path).map_err(|e| KitError::io(path, e))?;
                Self::from_json(&text, spec)?
            }
        };
        if let Ok(v) = std::env::var(SEED_ENV) {
            let seed = v
                .trim()
                .parse()
                .map_err(|_| KitError::Config(format!("{SEED_ENV}={v:?} is not an unsigned integer")))?;
            cfg.set_seed(seed);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Sets the dataset, training and evaluation seeds together.
    pub fn set_seed(&mut self, seed: u64) {
        self.dataset.seed = seed;
        self.train.seed = seed;
        self.eval.seed = seed;
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(KitError::Config(m));
        let d = &self.dataset;
        if d.size < 8 {
            return bad(format!("dataset.size must be at least 8, got {}", d.size));
        }
        if d.channels != 1 && d.channels != 3 {
            return bad(format!("dataset.channels must be 1 or 3, got {}", d.channels));
        }
        if d.grid.axes.is_empty() || d.grid.train_per_axis < 2 || d.grid.test_per_axis < 2 {
            return bad("dataset.grid needs at least one axis and two train and test samples per axis".into());
        }
        if !(d.grid.max_angle_deg > 0.0 && d.grid.max_angle_deg <= 180.0) {
            return bad(format!("dataset.grid.max_angle_deg must be in (0, 180], got {}", d.grid.max_angle_deg));
        }
        let t = &self.train;
        if self.pca.k == 0 || self.pca.k > d.grid.train_len() || self.pca.k > self.shape().len() {
            return bad(format!("pca.k = {} must be in 1..=min(train images, pixels)", self.pca.k));
        }
        if t.b < 2 || t.b > d.grid.train_len() {
            return bad(format!("train.b = {} must be in 2..=train images", t.b));
        }
        if t.d == 0 || t.n_prime == 0 || t.n_prime >= t.b || t.epochs == 0 || t.hidden.contains(&0) {
            return bad("train: d, epochs and hidden widths must be positive and 0 < n_prime < b".into());
        }
        let lr_ok = |x: f64| x.is_finite() && x > 0.0;
        let w_ok = |x: f64| x.is_finite() && x >= 0.0;
        if !(t.lr_final_ratio > 0.0 && t.lr_final_ratio <= 1.0) {
            return bad(format!("train.lr_final_ratio must be in (0, 1], got {}", t.lr_final_ratio));
        }
        if !lr_ok(t.lr_g) || !lr_ok(t.lr_e) || ![t.weights.rec, t.weights.dist, t.weights.tan].into_iter().all(w_ok) {
            return bad("train: learning rates must be positive and weights nonnegative".into());
        }
        let e = &self.elastica;
        if !(e.lambda >= 0.0 && e.lambda.is_finite()) || e.m < 4 || !(e.tol > 0.0) || e.max_iters == 0 {
            return bad("elastica: need lambda >= 0, m >= 4, tol > 0, max_iters > 0".into());
        }
        let v = &self.eval;
        if v.n_paths == 0 || v.frames < 2 {
            return bad("eval: need n_paths > 0 and T >= 2".into());
        }
        if !(0.0 < v.angle_min_deg && v.angle_min_deg <= v.angle_max_deg) {
            return bad("eval: need 0 < angle_min_deg <= angle_max_deg".into());
        }
        if v.tangent_neighbors == 0 || v.tangent_rank == 0 || !(v.pushforward_eps > 0.0) {
            return bad("eval: tangent_neighbors, tangent_rank and pushforward_eps must be positive".into());
        }
        Ok(())
    }

    pub fn shape(&self) -> ImageShape {
        ImageShape::new(self.dataset.channels, self.dataset.size, self.dataset.size)
    }

    pub fn train_config(&self) -> TrainConfig {
        let t = &self.train;
        TrainConfig {
            batch_size: t.b,
            latent_dim: t.d,
            neighbors: t.n_prime,
            epochs: t.epochs,
            pca_k: self.pca.k,
            hidden: t.hidden.clone(),
            activation: t.activation,
            lr_g: t.lr_g,
            lr_e: t.lr_e,
            lr_final_ratio: t.lr_final_ratio,
            alpha_rec: t.weights.rec,
            alpha_dist: t.weights.dist,
            alpha_tan: t.weights.tan,
            mode: t.mode,
            seed: t.seed,
            orthonormalize_tangents: t.orthonormalize_tangents,
            mapper_hidden: t.mapper_hidden,
        }
    }

    pub fn interp_config(&self) -> InterpConfig {
        InterpConfig {
            lambda: self.elastica.lambda,
            m: self.elastica.m,
            tol: self.elastica.tol,
            max_iters: self.elastica.max_iters,
            tangent_neighbors: self.eval.tangent_neighbors,
            tangent_rank: self.eval.tangent_rank,
            pushforward_eps: self.eval.pushforward_eps,
        }
    }

    pub fn suite_config(&self) -> SuiteConfig {
        SuiteConfig {
            n_paths: self.eval.n_paths,
            frames: self.eval.frames,
            angle_min_deg: self.eval.angle_min_deg,
            angle_max_deg: self.eval.angle_max_deg,
            seed: self.eval.seed,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config always serializes")
    }

    /// Hash of the canonical JSON form.
    pub fn hash(&self) -> String {
        sha256_hex(self.to_json().as_bytes())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate_and_round_trip() {
        for c in [RunConfig::desk(), RunConfig::paper()] {
            c.validate().unwrap();
            assert_eq!(RunConfig::from_json(&c.to_json(), "test").unwrap(), c);
        }
        let d = RunConfig::desk();
        assert_eq!((d.dataset.grid.train_len(), d.dataset.grid.test_len()), (240, 480));
        assert_eq!((d.shape().height, d.train.d, d.train.b, d.train.n_prime), (48, 8, 32, 8));
        let p = RunConfig::paper();
        assert_eq!((p.dataset.grid.train_len(), p.dataset.grid.test_len()), (1200, 3600));
        assert_eq!(p.eval.n_paths, 114);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let mut v: serde_json::Value = serde_json::from_str(&RunConfig::desk().to_json()).unwrap();
        v["train"]["momentum"] = serde_json::json!(0.9);
        assert!(matches!(RunConfig::from_json(&v.to_string(), "t"), Err(KitError::Json { .. })));
        let mut v: serde_json::Value = serde_json::from_str(&RunConfig::desk().to_json()).unwrap();
        v["extra"] = serde_json::json!({});
        assert!(RunConfig::from_json(&v.to_string(), "t").is_err());
    }

    #[test]
    fn invalid_values_are_rejected() {
        let mut c = RunConfig::desk();
        c.elastica.m = 3;
        assert!(matches!(RunConfig::from_json(&c.to_json(), "t"), Err(KitError::Config(_))));
        let mut c = RunConfig::desk();
        c.train.n_prime = c.train.b;
        assert!(c.validate().is_err());
        let mut c = RunConfig::desk();
        c.eval.angle_min_deg = 50.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn seed_override_touches_all_sections() {
        let mut c = RunConfig::desk();
        let before = c.hash();
        c.set_seed(99);
        assert_eq!((c.dataset.seed, c.train.seed, c.eval.seed), (99, 99, 99));
        assert_ne!(c.hash(), before);
    }
}
