//! Self-contained numerical checks: gradient fidelity, loss invariances,
//! elastica oracles and tangent accuracy. Each check reports a measured
//! value against its bound.

use alloc::boxed::Box;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::dataset::{make_object, sample_grid, Axis, GridSpec, ImageShape, ObjectKind};
use crate::elastica::{hausdorff, solve_free_elastica, DirectedPoint, ElasticaParams};
use crate::embed::{
    encoder_objective, generator_objective, loss_pairwise_e, loss_pairwise_g, loss_recon_e, loss_recon_g, loss_tangent_e,
    loss_tangent_g, Batch, GeomMapper, LossGrad, LossWeights, TangentForm,
};
use crate::error::Result;
use crate::math;
use crate::netcore::{Activation, Layer, Mlp};
use crate::numerics::{corr_loss, pairwise_dist, svd, Matrix, PcaModel};
use crate::rng::{self, standard_normal, ChaCha8Rng};
use crate::tangent::{estimate_tangents, orbit_derivative, principal_angles};

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub bound: f64,
    pub pass: bool,
}

impl Check {
    fn below(name: impl Into<String>, value: f64, bound: f64) -> Self {
        Self { name: name.into(), value, bound, pass: value < bound }
    }

    fn at_least(name: impl Into<String>, value: f64, bound: f64) -> Self {
        Self { name: name.into(), value, bound, pass: value >= bound }
    }
}

const K: usize = 64;
const D: usize = 8;
const B: usize = 32;
const NB: usize = 8;
const NB_PROJ: usize = 3;
const ALL_ON: LossWeights = LossWeights { rec: 1.0, dist: 1.0, tan: 1.0 };

fn identity_pca(k: usize, ambient: usize) -> PcaModel {
    let mut components = Matrix::zeros(k, ambient);
    for i in 0..k {
        components[(i, i)] = 1.0;
    }
    PcaModel {
        mean: vec![0.0; ambient],
        components,
        explained_variance: vec![1.0; k],
    }
}

fn random_mapper(seed: u64, act: Activation) -> Result<GeomMapper> {
    let mut r = rng::seeded(seed);
    let e = Mlp::new(&[K, 128, 128, D], act, &mut r)?;
    let g = Mlp::new(&[D, 128, 128, K], act, &mut r)?;
    Ok(GeomMapper::new(identity_pca(K, K + 4), 0.7, e, g, None, ImageShape::new(1, 1, K + 4))?.mark_trained())
}

fn normal(r: &mut ChaCha8Rng, rows: usize, cols: usize, s: f64) -> Matrix {
    let data = (0..rows * cols).map(|_| s * standard_normal(r)).collect();
    Matrix::from_vec(rows, cols, data).expect("sized buffer")
}

fn random_batch(seed: u64, nb: usize) -> Batch {
    let mut r = rng::seeded(seed);
    let coords = normal(&mut r, B, K, 1.0);
    let rep: Vec<usize> = (0..B).flat_map(|k| core::iter::repeat(k).take(nb)).collect();
    let neighbors = coords.gather_rows(&rep).add(&normal(&mut r, B * nb, K, 0.1)).expect("same shape");
    Batch { coords, residual: 0.37, neighbors: Some(neighbors) }
}

#[derive(Clone, Copy)]
enum Net {
    E,
    G,
}

fn net_mut(m: &mut GeomMapper, net: Net) -> &mut Mlp {
    match net {
        Net::E => &mut m.encoder,
        Net::G => &mut m.generator,
    }
}

/// Worst relative error of central differences (h = 1e-5) over the six
/// largest-gradient parameters and six random ones.
fn fd_error(m: &GeomMapper, net: Net, f: &dyn Fn(&GeomMapper) -> Result<LossGrad>) -> Result<f64> {
    let analytic = f(m)?.grads.0;
    let mut idx: Vec<usize> = (0..analytic.len()).collect();
    idx.sort_by(|&a, &b| analytic[b].abs().total_cmp(&analytic[a].abs()));
    let mut picks = idx[..6].to_vec();
    let mut r = rng::seeded(99);
    picks.extend((0..6).map(|_| r.gen_range(0..analytic.len())));
    let base = net_mut(&mut m.clone(), net).params_flat();
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for &p in &picks {
        let eval = |delta: f64| -> Result<f64> {
            let mut mm = m.clone();
            let mut params = base.clone();
            params[p] += delta;
            net_mut(&mut mm, net).set_params_flat(&params)?;
            Ok(f(&mm)?.value())
        };
        let fd = (eval(h)? - eval(-h)?) / (2.0 * h);
        let a = analytic[p];
        worst = worst.max((a - fd).abs() / a.abs().max(fd.abs()).max(1e-6));
    }
    Ok(worst)
}

type LossFn<'a> = Box<dyn Fn(&GeomMapper) -> Result<LossGrad> + 'a>;

/// Finite-difference checks of every loss and both composite objectives,
/// for tanh and leaky-ReLU networks.
pub fn gradient_checks() -> Result<Vec<Check>> {
    let batch = random_batch(1, NB);
    let proj = random_batch(1, NB_PROJ);
    let nbrs = batch.neighbors.clone().expect("built with neighbors");
    let proj_nbrs = proj.neighbors.clone().expect("built with neighbors");
    let mut out = Vec::new();
    for act in [Activation::Tanh, Activation::LeakyRelu] {
        let m = random_mapper(2, act)?;
        let w = m.encoder.forward(&batch.coords)?;
        let checks: Vec<(&str, Net, LossFn)> = vec![
            ("recon_g", Net::G, Box::new(|m| loss_recon_g(m, &batch))),
            ("recon_e", Net::E, Box::new(|m| loss_recon_e(m, &batch))),
            ("pairwise_g", Net::G, Box::new(|m| loss_pairwise_g(m, &w))),
            ("pairwise_e", Net::E, Box::new(|m| loss_pairwise_e(m, &batch.coords))),
            ("tangent_g", Net::G, Box::new(|m| loss_tangent_g(m, &w, NB, TangentForm::Gram))),
            ("tangent_e", Net::E, Box::new(|m| loss_tangent_e(m, &batch.coords, &nbrs, TangentForm::Gram))),
            ("tangent_g_projector", Net::G, Box::new(|m| loss_tangent_g(m, &w, NB_PROJ, TangentForm::Projector))),
            (
                "tangent_e_projector",
                Net::E,
                Box::new(|m| loss_tangent_e(m, &proj.coords, &proj_nbrs, TangentForm::Projector)),
            ),
            (
                "composite_g",
                Net::G,
                Box::new(|m| generator_objective(m, &batch, None, NB, ALL_ON, TangentForm::Gram, true)),
            ),
            ("composite_e", Net::E, Box::new(|m| encoder_objective(m, &batch, ALL_ON, TangentForm::Gram, true))),
        ];
        for (name, net, f) in &checks {
            out.push(Check::below(format!("grad {name} {act:?}"), fd_error(&m, *net, f.as_ref())?, 1e-4));
        }
    }
    Ok(out)
}

fn orthonormal_columns(r: &mut ChaCha8Rng, k: usize, d: usize) -> Result<Matrix> {
    let dec = svd(&normal(r, k, d, 1.0))?;
    let mut q = Matrix::zeros(k, d);
    for j in 0..d {
        for (i, v) in dec.left(j).into_iter().enumerate() {
            q[(i, j)] = v;
        }
    }
    Ok(q)
}

fn linear(weight: Matrix) -> Result<Mlp> {
    let bias = Matrix::zeros(1, weight.rows());
    Mlp::from_layers(vec![Layer { weight, bias }], Activation::Tanh)
}

/// Affine invariance of the correlation loss, zero geometry losses under
/// isometries up to scale, and batch-permutation invariance.
pub fn invariance_checks() -> Result<Vec<Check>> {
    let mut out = Vec::new();

    let mut worst: f64 = 0.0;
    for seed in 0..20u64 {
        let mut r = rng::seeded(seed);
        let d = pairwise_dist(&normal(&mut r, 6, 3, 1.0))?.into_matrix();
        let alpha = r.gen_range(0.01..50.0);
        let mut e = d.scale(alpha);
        for k in 0..6 {
            let shift = r.gen_range(-5.0..5.0);
            e.row_mut(k).iter_mut().for_each(|x| *x += shift);
        }
        worst = worst.max(corr_loss(&d, &e)?.value.abs());
    }
    out.push(Check::below("corr_loss positive affine rows", worst, 1e-10));

    let mut r = rng::seeded(5);
    let q = orthonormal_columns(&mut r, K, D)?;
    let m = GeomMapper::new(identity_pca(K, K), 1.0, linear(q.transpose().scale(0.3))?, linear(q.scale(2.5))?, None, ImageShape::new(1, 8, 8))?
        .mark_trained();
    let w = normal(&mut r, B, D, 1.0);
    let coords = w.matmul_nt(&q)?;
    let rep: Vec<usize> = (0..B).flat_map(|k| core::iter::repeat(k).take(NB)).collect();
    let nb = coords.gather_rows(&rep).add(&normal(&mut r, B * NB, D, 0.1).matmul_nt(&q)?)?;
    let iso = [
        loss_pairwise_g(&m, &w)?.value().abs(),
        loss_tangent_g(&m, &w, NB, TangentForm::Gram)?.value().abs(),
        loss_pairwise_e(&m, &coords)?.value().abs(),
        loss_tangent_e(&m, &coords, &nb, TangentForm::Gram)?.value().abs(),
    ];
    out.push(Check::below("geometry losses under isometry", iso.iter().cloned().fold(0.0, f64::max), 1e-10));

    let m = random_mapper(3, Activation::Tanh)?;
    let mut perm: Vec<usize> = (0..B).collect();
    perm.shuffle(&mut rng::seeded(8));
    let mut worst: f64 = 0.0;
    for (form, nb) in [(TangentForm::Gram, NB), (TangentForm::Projector, NB_PROJ)] {
        let batch = random_batch(4, nb);
        let nb_perm: Vec<usize> = perm.iter().flat_map(|&k| k * nb..(k + 1) * nb).collect();
        let permuted = Batch {
            coords: batch.coords.gather_rows(&perm),
            residual: batch.residual,
            neighbors: batch.neighbors.as_ref().map(|n| n.gather_rows(&nb_perm)),
        };
        let a = generator_objective(&m, &batch, None, nb, ALL_ON, form, false)?.terms;
        let b = generator_objective(&m, &permuted, None, nb, ALL_ON, form, false)?.terms;
        let c = encoder_objective(&m, &batch, ALL_ON, form, false)?.terms;
        let d = encoder_objective(&m, &permuted, ALL_ON, form, false)?.terms;
        for (x, y) in [(a.recon, b.recon), (a.dist, b.dist), (a.tan, b.tan), (c.dist, d.dist), (c.tan, d.tan)] {
            worst = worst.max((x - y).abs() / x.abs().max(1.0));
        }
    }
    out.push(Check::below("batch permutation invariance", worst, 1e-9));
    Ok(out)
}

fn dp(w: &[f64], v: &[f64]) -> Result<DirectedPoint> {
    DirectedPoint::new(w.to_vec(), v.to_vec())
}

/// Discrete bending energy of a half circle, relative to `π/(2R)`.
fn half_circle_error(r: f64, m: usize) -> Result<f64> {
    let pts: Vec<Vec<f64>> = (0..=m)
        .map(|i| {
            let t = core::f64::consts::PI * i as f64 / m as f64;
            vec![r * math::cos(t), r * math::sin(t)]
        })
        .collect();
    let want = core::f64::consts::PI / (2.0 * r);
    Ok((crate::elastica::energy(&pts, 1.0)?.bend - want).abs() / want)
}

/// Collinear case, half-circle energy, U-turn against a dense solve and the
/// length response to λ.
pub fn elastica_checks() -> Result<Vec<Check>> {
    let mut out = Vec::new();
    let p1 = dp(&[0.0, 0.0, 1.0], &[1.0, 2.0, 0.0])?;
    let p2 = dp(&[1.0, 2.0, 1.0], &[1.0, 2.0, 0.0])?;
    let e = solve_free_elastica(&p1, &p2, ElasticaParams::default())?.energy()?;
    out.push(Check::below("straight line bend", e.bend, 1e-6));
    out.push(Check::below("straight line length - chord", (e.length - math::sqrt(5.0)).abs(), 1e-6));
    out.push(Check::below("half circle bend rel error", half_circle_error(1.7, 200)?, 0.02));

    let a = dp(&[0.0, 0.0], &[0.0, 1.0])?;
    let b = dp(&[1.0, 0.0], &[0.0, -1.0])?;
    let dense = ElasticaParams { lambda: 1.0, m: 400, max_iters: 200_000, tol: 1e-14 };
    let oracle = solve_free_elastica(&a, &b, dense)?;
    let coarse = solve_free_elastica(&a, &b, ElasticaParams::default())?;
    out.push(Check::below("u-turn hausdorff to dense", hausdorff(&coarse.points, &oracle.points), 1e-2));

    let mut lengths = Vec::new();
    for lambda in [0.2, 0.5, 1.0, 2.0, 5.0] {
        let c = solve_free_elastica(&a, &b, ElasticaParams { lambda, ..Default::default() })?;
        lengths.push(c.energy()?.length);
    }
    let worst_rise = lengths.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max);
    out.push(Check::below("lambda sweep max length rise", worst_rise, 1e-12));
    Ok(out)
}

/// Fraction of base points on a single-axis sweep whose r = 1 estimated
/// tangent is within 5° of the dense orbit derivative.
pub fn tangent_check() -> Result<Check> {
    let obj = make_object(ObjectKind::Chairlike, 3)?;
    let shape = ImageShape::new(1, 32, 32);
    let (s, _) = sample_grid(&obj, &GridSpec::new(vec![Axis::Y], 80, 0, 180.0), shape)?;
    let step = 0.125f64.to_radians();
    let mut good = 0;
    for i in 0..s.len() {
        let t = estimate_tangents(&s, i, 2, 1)?;
        let mut dense = orbit_derivative(&obj, &s[i].rotation, Axis::Y, step, shape);
        let n = math::norm(&dense);
        dense.iter_mut().for_each(|v| *v /= n);
        if principal_angles(&t.basis, &[dense])?[0].to_degrees() < 5.0 {
            good += 1;
        }
    }
    Ok(Check::at_least("tangent within 5 deg fraction", good as f64 / s.len() as f64, 0.9))
}

/// Every check above, in order.
pub fn all_checks() -> Result<Vec<Check>> {
    let mut out = gradient_checks()?;
    out.extend(invariance_checks()?);
    out.extend(elastica_checks()?);
    out.push(tangent_check()?);
    Ok(out)
}
