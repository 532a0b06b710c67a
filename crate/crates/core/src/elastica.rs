//! Discrete free elastica between directed points.
//!
//! The curve is a polyline `η₀..η_m`. Bending uses turning angles at the
//! interior nodes; the objective is `E_bend + λ·length`. The endpoints are
//! fixed, and the two boundary-adjacent nodes slide along the prescribed
//! departure and arrival rays, so the boundary directions hold exactly.

use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;
use crate::tangent::TangentBasis;

/// A position with a unit direction.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectedPoint {
    pub w: Vec<f64>,
    pub v: Vec<f64>,
}

impl DirectedPoint {
    /// Normalizes `v`; fails on a zero or mismatched direction.
    pub fn new(w: Vec<f64>, v: Vec<f64>) -> Result<Self> {
        if w.len() != v.len() || w.is_empty() {
            return Err(Error::ShapeMismatch {
                context: "directed point",
                expected: (1, w.len()),
                got: (1, v.len()),
            });
        }
        let n = math::norm(&v);
        if !(n > 0.0) || !math::all_finite(&w) || !n.is_finite() {
            return Err(Error::Config("directed point needs a finite nonzero direction".into()));
        }
        Ok(Self {
            w,
            v: v.iter().map(|x| x / n).collect(),
        })
    }

    pub fn dim(&self) -> usize {
        self.w.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ElasticaCurve {
    pub points: Vec<Vec<f64>>,
    pub lambda: f64,
    pub converged: bool,
    pub objective: f64,
    pub iterations: usize,
}

impl ElasticaCurve {
    pub fn segments(&self) -> usize {
        self.points.len() - 1
    }

    pub fn energy(&self) -> Result<Energy> {
        energy(&self.points, self.lambda)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Energy {
    pub bend: f64,
    pub length: f64,
    pub objective: f64,
}

/// Departure and arrival directions for a pair of directed bases.
#[derive(Debug, Clone, PartialEq)]
pub struct Directions {
    pub v1: Vec<f64>,
    /// Arrival direction at the second point, `−v2`.
    pub u2: Vec<f64>,
    /// `⟨v1, v2⟩`; −1 when the two directions point straight at each other.
    pub inner: f64,
    /// Set when a projected chord was too short and the chord was used.
    pub fallback: bool,
}

fn unit_or_chord(t: &TangentBasis, chord: &[f64]) -> (Vec<f64>, bool) {
    let p = t.project(chord);
    let n = math::norm(&p);
    if n < 1e-8 {
        let c = math::norm(chord);
        (chord.iter().map(|x| x / c).collect(), true)
    } else {
        (p.iter().map(|x| x / n).collect(), false)
    }
}

/// Directions within each tangent plane pointing most toward the other
/// point.
pub fn pick_directions(w1: &[f64], t1: &TangentBasis, w2: &[f64], t2: &TangentBasis) -> Result<Directions> {
    if w1.len() != w2.len() || t1.ambient_dim() != w1.len() || t2.ambient_dim() != w2.len() {
        return Err(Error::ShapeMismatch {
            context: "pick_directions",
            expected: (1, w1.len()),
            got: (1, w2.len()),
        });
    }
    let chord: Vec<f64> = w2.iter().zip(w1).map(|(b, a)| b - a).collect();
    if math::norm(&chord) == 0.0 {
        return Err(Error::Config("pick_directions needs distinct points".into()));
    }
    let back: Vec<f64> = chord.iter().map(|x| -x).collect();
    let (v1, f1) = unit_or_chord(t1, &chord);
    let (v2, f2) = unit_or_chord(t2, &back);
    let inner = math::dot(&v1, &v2);
    Ok(Directions {
        v1,
        u2: v2.iter().map(|x| -x).collect(),
        inner,
        fallback: f1 || f2,
    })
}

/// Turning angle between `a` and `b` with its sine.
fn turn(a: &[f64], b: &[f64], la: f64, lb: f64) -> (f64, f64, f64) {
    let c = (math::dot(a, b) / (la * lb)).clamp(-1.0, 1.0);
    let mut s2 = 0.0;
    for (x, y) in a.iter().zip(b) {
        let r = y / lb - c * x / la;
        s2 += r * r;
    }
    let s = math::sqrt(s2);
    (math::atan2(s, c), s, c)
}

/// Bending energy, length and `bend + λ·length` of a polyline.
pub fn energy(points: &[Vec<f64>], lambda: f64) -> Result<Energy> {
    let (bend, length, _) = curve_terms(points, 0.0, 0.0, None)?;
    Ok(Energy {
        bend,
        length,
        objective: bend + lambda * length,
    })
}

/// Bend, length and the spacing term `Σ(ℓᵢ − ℓᵢ₋₁)²/Δsᵢ³`. When `grad`
/// is given it receives the node derivative of
/// `bend + lambda·length + rho·spacing`.
fn curve_terms(points: &[Vec<f64>], lambda: f64, rho: f64, grad: Option<&mut [Vec<f64>]>) -> Result<(f64, f64, f64)> {
    let m = points.len().saturating_sub(1);
    if m < 1 {
        return Err(Error::Config("curve needs at least two points".into()));
    }
    let d = points[0].len();
    let mut seg = Vec::with_capacity(m);
    let mut len = Vec::with_capacity(m);
    for i in 0..m {
        let e: Vec<f64> = points[i + 1].iter().zip(&points[i]).map(|(b, a)| b - a).collect();
        let l = math::norm(&e);
        if !(l > 0.0) {
            return Err(Error::DegenerateCurve { segment: i });
        }
        seg.push(e);
        len.push(l);
    }
    let length: f64 = len.iter().sum();
    let mut spacing = 0.0;
    let mut bend = 0.0;
    let want = grad.is_some();
    let mut ge = vec![vec![0.0; if want { d } else { 0 }]; m];
    for i in 1..m {
        let (a, b, la, lb) = (&seg[i - 1], &seg[i], len[i - 1], len[i]);
        let (theta, s, c) = turn(a, b, la, lb);
        let ds = 0.5 * (la + lb);
        bend += 0.5 * theta * theta / ds;
        // boundary rays are kept short relative to their neighbor
        let (p, q) = match i {
            1 => (BOUNDARY_RATIO, 1.0),
            _ if i == m - 1 => (1.0, BOUNDARY_RATIO),
            _ => (1.0, 1.0),
        };
        let u = p * lb - q * la;
        spacing += u * u / (ds * ds * ds);
        if want {
            let common = -1.5 * u * u / (ds * ds * ds * ds);
            let ga = rho * (common - 2.0 * q * u / (ds * ds * ds));
            let gb = rho * (common + 2.0 * p * u / (ds * ds * ds));
            let ratio = if s < 1e-8 { 1.0 } else { theta / s };
            // ∂θ/∂a = −(b̂ − c·â)/(|a| sinθ), so θ·∂θ/∂a = −ratio·(b̂ − c·â)/|a|
            let k = theta * theta / (4.0 * ds * ds);
            for j in 0..d {
                let (ah, bh) = (a[j] / la, b[j] / lb);
                let da = -ratio * (bh - c * ah) / la;
                let db = -ratio * (ah - c * bh) / lb;
                ge[i - 1][j] += da / ds - k * ah + ga * ah;
                ge[i][j] += db / ds - k * bh + gb * bh;
            }
        }
    }
    if let Some(g) = grad {
        for row in g.iter_mut() {
            row.iter_mut().for_each(|x| *x = 0.0);
        }
        for i in 0..m {
            for j in 0..d {
                let v = ge[i][j] + lambda * seg[i][j] / len[i];
                g[i + 1][j] += v;
                g[i][j] -= v;
            }
        }
    }
    Ok((bend, length, spacing))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElasticaParams {
    pub lambda: f64,
    pub m: usize,
    pub max_iters: usize,
    pub tol: f64,
}

impl Default for ElasticaParams {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            m: 40,
            max_iters: 5000,
            tol: 1e-8,
        }
    }
}

/// Cubic Hermite curve with end tangents scaled by the chord length.
pub fn hermite_curve(p1: &DirectedPoint, p2: &DirectedPoint, m: usize) -> Vec<Vec<f64>> {
    let l = math::dist(&p1.w, &p2.w);
    (0..=m)
        .map(|i| {
            if i == 0 {
                return p1.w.clone();
            }
            if i == m {
                return p2.w.clone();
            }
            let s = i as f64 / m as f64;
            let (s2, s3) = (s * s, s * s * s);
            let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
            let h10 = s3 - 2.0 * s2 + s;
            let h01 = -2.0 * s3 + 3.0 * s2;
            let h11 = s3 - s2;
            (0..p1.dim())
                .map(|j| h00 * p1.w[j] + h10 * l * p1.v[j] + h01 * p2.w[j] + h11 * l * p2.v[j])
                .collect()
        })
        .collect()
}

/// Free variables: log ray lengths at both ends plus the inner nodes.
struct Problem<'a> {
    p1: &'a DirectedPoint,
    p2: &'a DirectedPoint,
    m: usize,
    lambda: f64,
}

impl Problem<'_> {
    fn dim(&self) -> usize {
        2 + (self.m - 3) * self.p1.dim()
    }

    fn points(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let d = self.p1.dim();
        let (a, c) = (math::exp(x[0]), math::exp(x[1]));
        let mut pts = Vec::with_capacity(self.m + 1);
        pts.push(self.p1.w.clone());
        pts.push((0..d).map(|j| self.p1.w[j] + a * self.p1.v[j]).collect());
        for k in 0..self.m - 3 {
            pts.push(x[2 + k * d..2 + (k + 1) * d].to_vec());
        }
        pts.push((0..d).map(|j| self.p2.w[j] - c * self.p2.v[j]).collect());
        pts.push(self.p2.w.clone());
        pts
    }

    fn encode(&self, pts: &[Vec<f64>]) -> Vec<f64> {
        let floor = 1e-6 * math::dist(&self.p1.w, &self.p2.w) / self.m as f64;
        let a = pts[1].iter().zip(&self.p1.w).zip(&self.p1.v).map(|((p, w), v)| (p - w) * v).sum::<f64>();
        let c = pts[self.m - 1].iter().zip(&self.p2.w).zip(&self.p2.v).map(|((p, w), v)| (w - p) * v).sum::<f64>();
        let mut x = vec![math::ln(a.max(floor)), math::ln(c.max(floor))];
        for p in &pts[2..self.m - 1] {
            x.extend_from_slice(p);
        }
        x
    }

    /// Objective value, or `None` if the curve degenerates.
    fn value(&self, x: &[f64]) -> Option<f64> {
        let (b, l, sp) = curve_terms(&self.points(x), 0.0, 0.0, None).ok()?;
        let f = b + self.lambda * l + SPACING_WEIGHT * sp;
        f.is_finite().then_some(f)
    }

    /// Polyline node index that variable `i` moves.
    fn node_of(&self, i: usize) -> usize {
        match i {
            0 => 1,
            1 => self.m - 1,
            _ => 2 + (i - 2) / self.p1.dim(),
        }
    }

    /// Hessian by central differences of the gradient. A node only couples
    /// to nodes at most two away, so variables whose nodes are five apart
    /// share one difference.
    fn hessian(&self, x: &[f64]) -> Result<Vec<Vec<f64>>> {
        let n = x.len();
        let d = self.p1.dim();
        let mut h = vec![vec![0.0; n]; n];
        let coord = |i: usize| if i < 2 { 0 } else { (i - 2) % d };
        for color in 0..5 {
            for j in 0..d {
                let set: Vec<usize> = (0..n).filter(|&i| self.node_of(i) % 5 == color && coord(i) == j).collect();
                if set.is_empty() {
                    continue;
                }
                let step: Vec<f64> = set.iter().map(|&i| 1e-6 * x[i].abs().max(1.0)).collect();
                let (mut a, mut b) = (x.to_vec(), x.to_vec());
                for (&i, &s) in set.iter().zip(&step) {
                    a[i] += s;
                    b[i] -= s;
                }
                let ga = self.value_grad(&a)?.1;
                let gb = self.value_grad(&b)?.1;
                for r in 0..n {
                    let nr = self.node_of(r);
                    if let Some(k) = set.iter().position(|&c| self.node_of(c).abs_diff(nr) <= 2) {
                        h[r][set[k]] = (ga[r] - gb[r]) / (2.0 * step[k]);
                    }
                }
            }
        }
        for r in 0..n {
            for c in 0..r {
                let v = 0.5 * (h[r][c] + h[c][r]);
                h[r][c] = v;
                h[c][r] = v;
            }
        }
        Ok(h)
    }

    fn value_grad(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        let pts = self.points(x);
        let d = self.p1.dim();
        let mut g = vec![vec![0.0; d]; self.m + 1];
        let (b, l, sp) = curve_terms(&pts, self.lambda, SPACING_WEIGHT, Some(&mut g))?;
        let mut out = Vec::with_capacity(self.dim());
        let (a, c) = (math::exp(x[0]), math::exp(x[1]));
        out.push(math::dot(&g[1], &self.p1.v) * a);
        out.push(-math::dot(&g[self.m - 1], &self.p2.v) * c);
        for gk in &g[2..self.m - 1] {
            out.extend_from_slice(gk);
        }
        Ok((b + self.lambda * l + SPACING_WEIGHT * sp, out))
    }
}

/// Accepted iterations over which the relative decrease is measured.
const STOP_WINDOW: usize = 2;
/// Weight of the equal-spacing term that fixes the parameterization.
const SPACING_WEIGHT: f64 = 1.0;
const BOUNDARY_RATIO: f64 = 0.01;

/// Minimizes bend + λ·length from a Hermite start with damped Newton steps
/// and a backtracking line search. `p2.v` is the arrival direction.
pub fn solve_free_elastica(p1: &DirectedPoint, p2: &DirectedPoint, params: ElasticaParams) -> Result<ElasticaCurve> {
    let ElasticaParams { lambda, m, tol, .. } = params;
    if m < 4 {
        return Err(Error::Config(alloc::format!("elastica needs m ≥ 4, got {m}")));
    }
    if p1.dim() != p2.dim() {
        return Err(Error::ShapeMismatch {
            context: "elastica endpoints",
            expected: (1, p1.dim()),
            got: (1, p2.dim()),
        });
    }
    if !(lambda >= 0.0) || !(tol >= 0.0) {
        return Err(Error::Config("elastica needs λ ≥ 0 and tol ≥ 0".into()));
    }
    if math::dist(&p1.w, &p2.w) == 0.0 {
        return Err(Error::Config("elastica endpoints coincide".into()));
    }
    descend(p1, p2, hermite_curve(p1, p2, m), m, lambda, tol, params.max_iters)
}

fn descend(
    p1: &DirectedPoint,
    p2: &DirectedPoint,
    init: Vec<Vec<f64>>,
    m: usize,
    lambda: f64,
    tol: f64,
    max_iters: usize,
) -> Result<ElasticaCurve> {
    let prob = Problem { p1, p2, m, lambda };
    let mut x = prob.encode(&init);
    let (mut f, mut g) = prob.value_grad(&x)?;
    let mut recent: VecDeque<f64> = VecDeque::from([f]);
    let mut converged = false;
    let mut iters = 0;
    let mut mu = 0.0;
    while iters < max_iters {
        if math::norm(&g) == 0.0 {
            converged = true;
            break;
        }
        let h = prob.hessian(&x)?;
        let scale = (0..h.len()).map(|i| h[i][i].abs()).fold(0.0, f64::max).max(1e-300);
        let mut accepted = None;
        while mu <= 1e12 * scale {
            let Some(dir) = shifted_solve(&h, &g, mu) else {
                mu = (4.0 * mu).max(1e-10 * scale);
                continue;
            };
            let slope = math::dot(&dir, &g);
            if !(slope < 0.0) {
                mu = (4.0 * mu).max(1e-10 * scale);
                continue;
            }
            let mut step = 1.0;
            for _ in 0..30 {
                let trial: Vec<f64> = x.iter().zip(&dir).map(|(a, b)| a + step * b).collect();
                if let Some(ft) = prob.value(&trial) {
                    if ft <= f + 1e-4 * step * slope {
                        accepted = Some((trial, step));
                        break;
                    }
                }
                step *= 0.5;
            }
            if accepted.is_some() {
                break;
            }
            mu = (10.0 * mu).max(1e-10 * scale);
        }
        let Some((xn, step)) = accepted else {
            // flat to roundoff
            if math::norm(&g) <= 1e-9 * (1.0 + f.abs()) {
                converged = true;
                break;
            }
            return Err(Error::Stalled { iteration: iters });
        };
        mu = if step == 1.0 {
            if mu < 1e-12 * scale {
                0.0
            } else {
                mu / 4.0
            }
        } else {
            (4.0 * mu).max(1e-10 * scale)
        };
        let (fnew, gn) = prob.value_grad(&xn)?;
        x = xn;
        f = fnew;
        g = gn;
        iters += 1;
        recent.push_back(f);
        if recent.len() > STOP_WINDOW + 1 {
            recent.pop_front();
        }
        if recent.len() == STOP_WINDOW + 1 && (recent[0] - f) / f.abs().max(1e-300) < tol {
            converged = true;
            break;
        }
    }
    let points = prob.points(&x);
    let objective = energy(&points, lambda)?.objective;
    Ok(ElasticaCurve {
        points,
        lambda,
        converged,
        objective,
        iterations: iters,
    })
}

/// Solves `(H + μI) p = −g` by Cholesky; `None` if not positive definite.
fn shifted_solve(h: &[Vec<f64>], g: &[f64], mu: f64) -> Option<Vec<f64>> {
    let n = g.len();
    let mut l = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let mut sum = h[i][j] + if i == j { mu } else { 0.0 };
            for k in 0..j {
                sum -= l[i][k] * l[j][k];
            }
            if i == j {
                if !(sum > 0.0) {
                    return None;
                }
                l[i][i] = math::sqrt(sum);
            } else {
                l[i][j] = sum / l[j][j];
            }
        }
    }
    let mut y = vec![0.0; n];
    for i in 0..n {
        let mut sum = -g[i];
        for k in 0..i {
            sum -= l[i][k] * y[k];
        }
        y[i] = sum / l[i][i];
    }
    for i in (0..n).rev() {
        let mut sum = y[i];
        for k in i + 1..n {
            sum -= l[k][i] * y[k];
        }
        y[i] = sum / l[i][i];
    }
    Some(y)
}

/// `t` points equally spaced in arc length along the polyline.
pub fn resample_uniform(points: &[Vec<f64>], t: usize) -> Result<Vec<Vec<f64>>> {
    if t < 2 {
        return Err(Error::Config(alloc::format!("resampling needs T ≥ 2, got {t}")));
    }
    if points.len() < 2 {
        return Err(Error::Config("resampling needs at least two points".into()));
    }
    let mut cum = Vec::with_capacity(points.len());
    cum.push(0.0);
    for w in points.windows(2) {
        cum.push(cum.last().unwrap() + math::dist(&w[0], &w[1]));
    }
    let total = *cum.last().unwrap();
    let mut out = Vec::with_capacity(t);
    out.push(points[0].clone());
    let mut seg = 0;
    for j in 1..t - 1 {
        let target = total * j as f64 / (t - 1) as f64;
        while seg + 1 < points.len() - 1 && cum[seg + 1] < target {
            seg += 1;
        }
        let span = cum[seg + 1] - cum[seg];
        let u = if span > 0.0 { (target - cum[seg]) / span } else { 0.0 };
        out.push(points[seg].iter().zip(&points[seg + 1]).map(|(a, b)| a + u * (b - a)).collect());
    }
    out.push(points[points.len() - 1].clone());
    Ok(out)
}

fn point_segment_dist(p: &[f64], a: &[f64], b: &[f64]) -> f64 {
    let ab: Vec<f64> = b.iter().zip(a).map(|(x, y)| x - y).collect();
    let ap: Vec<f64> = p.iter().zip(a).map(|(x, y)| x - y).collect();
    let den = math::dot(&ab, &ab);
    let u = if den > 0.0 { (math::dot(&ap, &ab) / den).clamp(0.0, 1.0) } else { 0.0 };
    let mut s = 0.0;
    for j in 0..p.len() {
        let r = ap[j] - u * ab[j];
        s += r * r;
    }
    math::sqrt(s)
}

fn directed_hausdorff(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter()
        .map(|p| {
            if b.len() == 1 {
                return math::dist(p, &b[0]);
            }
            b.windows(2)
                .map(|s| point_segment_dist(p, &s[0], &s[1]))
                .fold(f64::INFINITY, f64::min)
        })
        .fold(0.0, f64::max)
}

/// Symmetric Hausdorff distance between two polylines, vertex to segment.
pub fn hausdorff(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    directed_hausdorff(a, b).max(directed_hausdorff(b, a))
}
