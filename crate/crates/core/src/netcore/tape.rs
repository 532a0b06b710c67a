//! Reverse-mode gradient tape over whole matrices.
//!
//! Nodes are appended in evaluation order, so the node vector is already a
//! topological order; `backward` walks it once from the root downwards.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;
use crate::numerics::{corr_loss, svd, Matrix};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    /// `x · wᵀ + b`
    Affine { x: Var, w: Var, b: Var },
    Tanh(Var),
    LeakyRelu(Var, f64),
    Add(Var, Var),
    Sub(Var, Var),
    Scale(Var, f64),
    Gather(Var, Vec<usize>),
    WeightedSum(Vec<(Var, f64)>),
    SumSquares(Var),
    PairwiseDist(Var),
    GramDist { t: Var, group: usize, cache: Vec<Matrix> },
    ProjectorDist { t: Var, group: usize, bases: Vec<RowBasis> },
    RowCorr { a: Var, b: Var, grad_a: Matrix, grad_b: Matrix },
}

#[derive(Debug)]
struct Node {
    value: Matrix,
    op: Op,
    needs_grad: bool,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of a root with respect to every node that needed one.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Matrix> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    /// Gradient of `v`, or zeros of the given shape if none flowed there.
    pub fn get_or_zeros(&self, v: Var, shape: (usize, usize)) -> Matrix {
        self.get(v)
            .cloned()
            .unwrap_or_else(|| Matrix::zeros(shape.0, shape.1))
    }
}

fn shape_err(context: &'static str, expected: (usize, usize), got: (usize, usize)) -> Error {
    Error::ShapeMismatch {
        context,
        expected,
        got,
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    /// Scalar value of a `1 × 1` node.
    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value.as_slice()[0]
    }

    fn push(&mut self, value: Matrix, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// Leaf that receives a gradient.
    pub fn param(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Leaf treated as a constant.
    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn affine(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (xv, wv, bv) = (self.value(x), self.value(w), self.value(b));
        if bv.shape() != (1, wv.rows()) {
            return Err(shape_err("affine bias", (1, wv.rows()), bv.shape()));
        }
        let mut y = xv.matmul_nt(wv)?;
        for i in 0..y.rows() {
            for (o, &bb) in y.row_mut(i).iter_mut().zip(bv.as_slice()) {
                *o += bb;
            }
        }
        let ng = self.needs(x) || self.needs(w) || self.needs(b);
        Ok(self.push(y, Op::Affine { x, w, b }, ng))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let y = self.value(x).map(math::tanh);
        let ng = self.needs(x);
        self.push(y, Op::Tanh(x), ng)
    }

    pub fn leaky_relu(&mut self, x: Var, slope: f64) -> Var {
        let y = self.value(x).map(|v| if v > 0.0 { v } else { slope * v });
        let ng = self.needs(x);
        self.push(y, Op::LeakyRelu(x, slope), ng)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let y = self.value(a).add(self.value(b))?;
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(y, Op::Add(a, b), ng))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let y = self.value(a).sub(self.value(b))?;
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(y, Op::Sub(a, b), ng))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let y = self.value(a).scale(s);
        let ng = self.needs(a);
        self.push(y, Op::Scale(a, s), ng)
    }

    /// Rows of `x` picked by `indices` (repeats allowed).
    pub fn gather(&mut self, x: Var, indices: Vec<usize>) -> Result<Var> {
        let xv = self.value(x);
        if let Some(&bad) = indices.iter().find(|&&i| i >= xv.rows()) {
            return Err(shape_err("gather", (xv.rows(), xv.cols()), (bad, xv.cols())));
        }
        let y = xv.gather_rows(&indices);
        let ng = self.needs(x);
        Ok(self.push(y, Op::Gather(x, indices), ng))
    }

    /// `Σ weight · term` over equally shaped terms.
    pub fn weighted_sum(&mut self, terms: Vec<(Var, f64)>) -> Result<Var> {
        let first = terms
            .first()
            .ok_or_else(|| Error::Config("weighted_sum of no terms".into()))?;
        let mut y = Matrix::zeros(self.value(first.0).rows(), self.value(first.0).cols());
        for &(v, w) in &terms {
            y.axpy(w, self.value(v))?;
        }
        let ng = terms.iter().any(|&(v, _)| self.needs(v));
        Ok(self.push(y, Op::WeightedSum(terms), ng))
    }

    pub fn sum_squares(&mut self, x: Var) -> Var {
        let y = Matrix::filled(1, 1, self.value(x).sum_squares());
        let ng = self.needs(x);
        self.push(y, Op::SumSquares(x), ng)
    }

    /// Euclidean distances between the rows of `x`.
    pub fn pairwise_dist(&mut self, x: Var) -> Result<Var> {
        let y = crate::numerics::pairwise_dist(self.value(x))?.into_matrix();
        let ng = self.needs(x);
        Ok(self.push(y, Op::PairwiseDist(x), ng))
    }

    /// Frobenius distances between the Gram signatures `T_kᵀT_k` of the
    /// consecutive `group`-row blocks of `t`, evaluated in `group × group`
    /// inner-product form.
    pub fn gram_dist(&mut self, t: Var, group: usize) -> Result<Var> {
        let blocks = split_blocks(self.value(t), group)?;
        let b = blocks.len();
        let self_gram: Vec<Matrix> = blocks
            .iter()
            .map(|a| a.matmul_nt(a))
            .collect::<Result<_>>()?;
        let self_sq: Vec<f64> = self_gram.iter().map(Matrix::sum_squares).collect();
        let mut y = Matrix::zeros(b, b);
        for k in 0..b {
            for m in k + 1..b {
                let c = blocks[k].matmul_nt(&blocks[m])?;
                let f = self_sq[k] + self_sq[m] - 2.0 * c.sum_squares();
                let d = snap_sqrt(f, self_sq[k] + self_sq[m]);
                y[(k, m)] = d;
                y[(m, k)] = d;
            }
        }
        let ng = self.needs(t);
        Ok(self.push(
            y,
            Op::GramDist {
                t,
                group,
                cache: self_gram,
            },
            ng,
        ))
    }

    /// Frobenius distances between the orthogonal projectors onto the row
    /// spaces of the `group`-row blocks of `t`.
    pub fn projector_dist(&mut self, t: Var, group: usize) -> Result<Var> {
        let blocks = split_blocks(self.value(t), group)?;
        let b = blocks.len();
        let bases: Vec<RowBasis> = blocks.iter().map(row_basis).collect::<Result<_>>()?;
        let mut y = Matrix::zeros(b, b);
        for k in 0..b {
            for m in k + 1..b {
                let c = bases[k].q.matmul_nt(&bases[m].q)?;
                let r = (bases[k].rank() + bases[m].rank()) as f64;
                let d = snap_sqrt(r - 2.0 * c.sum_squares(), r);
                y[(k, m)] = d;
                y[(m, k)] = d;
            }
        }
        let ng = self.needs(t);
        Ok(self.push(y, Op::ProjectorDist { t, group, bases }, ng))
    }

    /// Row-correlation loss `Σ_k (1 − ρ_k)` between two distance matrices.
    pub fn row_corr_loss(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = corr_loss(self.value(a), self.value(b))?;
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(
            Matrix::filled(1, 1, out.value),
            Op::RowCorr {
                a,
                b,
                grad_a: out.grad_a,
                grad_b: out.grad_b,
            },
            ng,
        ))
    }

    /// Backpropagates from a scalar root, seeding with 1.
    pub fn backward(&self, root: Var) -> Result<Gradients> {
        let shape = self.value(root).shape();
        if shape != (1, 1) {
            return Err(shape_err("backward root", (1, 1), shape));
        }
        self.backward_with(root, Matrix::filled(1, 1, 1.0))
    }

    /// Backpropagates `upstream` (shaped like the root's value).
    pub fn backward_with(&self, root: Var, upstream: Matrix) -> Result<Gradients> {
        let rshape = self.value(root).shape();
        if upstream.shape() != rshape {
            return Err(shape_err("backward upstream", rshape, upstream.shape()));
        }
        let mut grads: Vec<Option<Matrix>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[root.0] = Some(upstream);
        for idx in (0..=root.0).rev() {
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            let Some(gy) = grads[idx].take() else {
                continue;
            };
            self.propagate(node, &gy, &mut grads)?;
            grads[idx] = Some(gy);
        }
        Ok(Gradients { grads })
    }

    fn accumulate(&self, grads: &mut [Option<Matrix>], v: Var, g: Matrix) -> Result<()> {
        if !self.needs(v) {
            return Ok(());
        }
        match &mut grads[v.0] {
            Some(existing) => existing.axpy(1.0, &g)?,
            slot @ None => *slot = Some(g),
        }
        Ok(())
    }

    fn propagate(&self, node: &Node, gy: &Matrix, grads: &mut [Option<Matrix>]) -> Result<()> {
        match &node.op {
            Op::Leaf => {}
            Op::Affine { x, w, b } => {
                if self.needs(*x) {
                    self.accumulate(grads, *x, gy.matmul(self.value(*w))?)?;
                }
                if self.needs(*w) {
                    self.accumulate(grads, *w, gy.matmul_tn(self.value(*x))?)?;
                }
                if self.needs(*b) {
                    let mut gb = Matrix::zeros(1, gy.cols());
                    for row in gy.row_iter() {
                        for (o, &g) in gb.as_mut_slice().iter_mut().zip(row) {
                            *o += g;
                        }
                    }
                    self.accumulate(grads, *b, gb)?;
                }
            }
            Op::Tanh(x) => {
                let mut g = gy.clone();
                for (gv, &yv) in g.as_mut_slice().iter_mut().zip(node.value.as_slice()) {
                    *gv *= 1.0 - yv * yv;
                }
                self.accumulate(grads, *x, g)?;
            }
            Op::LeakyRelu(x, slope) => {
                let mut g = gy.clone();
                for (gv, &xv) in g.as_mut_slice().iter_mut().zip(self.value(*x).as_slice()) {
                    if xv <= 0.0 {
                        *gv *= slope;
                    }
                }
                self.accumulate(grads, *x, g)?;
            }
            Op::Add(a, b) => {
                self.accumulate(grads, *a, gy.clone())?;
                self.accumulate(grads, *b, gy.clone())?;
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, *a, gy.clone())?;
                self.accumulate(grads, *b, gy.scale(-1.0))?;
            }
            Op::Scale(a, s) => self.accumulate(grads, *a, gy.scale(*s))?,
            Op::Gather(x, indices) => {
                let xv = self.value(*x);
                let mut g = Matrix::zeros(xv.rows(), xv.cols());
                for (i, &src) in indices.iter().enumerate() {
                    for (o, &gv) in g.row_mut(src).iter_mut().zip(gy.row(i)) {
                        *o += gv;
                    }
                }
                self.accumulate(grads, *x, g)?;
            }
            Op::WeightedSum(terms) => {
                for &(v, w) in terms {
                    self.accumulate(grads, v, gy.scale(w))?;
                }
            }
            Op::SumSquares(x) => {
                let s = 2.0 * gy.as_slice()[0];
                self.accumulate(grads, *x, self.value(*x).scale(s))?;
            }
            Op::PairwiseDist(x) => {
                let xv = self.value(*x);
                let y = &node.value;
                let mut g = Matrix::zeros(xv.rows(), xv.cols());
                for k in 0..xv.rows() {
                    for m in k + 1..xv.rows() {
                        let d = y[(k, m)];
                        if d <= 0.0 {
                            continue;
                        }
                        let c = (gy[(k, m)] + gy[(m, k)]) / d;
                        for j in 0..xv.cols() {
                            let diff = c * (xv[(k, j)] - xv[(m, j)]);
                            g[(k, j)] += diff;
                            g[(m, j)] -= diff;
                        }
                    }
                }
                self.accumulate(grads, *x, g)?;
            }
            Op::GramDist { t, group, cache } => {
                let tv = self.value(*t);
                let blocks = split_blocks(tv, *group)?;
                let b = blocks.len();
                // (A Aᵀ) A per block
                let cubed: Vec<Matrix> = cache
                    .iter()
                    .zip(&blocks)
                    .map(|(g, a)| g.matmul(a))
                    .collect::<Result<_>>()?;
                let mut gb: Vec<Matrix> = blocks.iter().map(|a| Matrix::zeros(a.rows(), a.cols())).collect();
                for k in 0..b {
                    for m in k + 1..b {
                        let d = node.value[(k, m)];
                        if d <= 0.0 {
                            continue;
                        }
                        let coef = 2.0 * (gy[(k, m)] + gy[(m, k)]) / d;
                        if coef == 0.0 {
                            continue;
                        }
                        let c = blocks[k].matmul_nt(&blocks[m])?;
                        let cb = c.matmul(&blocks[m])?;
                        let cta = c.matmul_tn(&blocks[k])?;
                        gb[k].axpy(coef, &cubed[k])?;
                        gb[k].axpy(-coef, &cb)?;
                        gb[m].axpy(coef, &cubed[m])?;
                        gb[m].axpy(-coef, &cta)?;
                    }
                }
                self.accumulate(grads, *t, join_blocks(&gb, tv.cols()))?;
            }
            Op::ProjectorDist { t, group, bases } => {
                let tv = self.value(*t);
                let gsize = *group;
                let b = bases.len();
                let mut gb: Vec<Matrix> = (0..b).map(|_| Matrix::zeros(gsize, tv.cols())).collect();
                for k in 0..b {
                    for m in k + 1..b {
                        let d = node.value[(k, m)];
                        if d <= 0.0 {
                            continue;
                        }
                        let g = gy[(k, m)] + gy[(m, k)];
                        if g == 0.0 {
                            continue;
                        }
                        let (bk, bm) = (&bases[k], &bases[m]);
                        let c = bk.q.matmul_nt(&bm.q)?;
                        let ct = c.transpose();
                        // d = sqrt(r_k + r_m − 2‖C‖²)  ⇒  ∂d = −∂‖C‖² / d
                        gb[k].axpy(-g / d, &bk.trace_grad(&c, &bm.q)?)?;
                        gb[m].axpy(-g / d, &bm.trace_grad(&ct, &bk.q)?)?;
                    }
                }
                self.accumulate(grads, *t, join_blocks(&gb, tv.cols()))?;
            }
            Op::RowCorr { a, b, grad_a, grad_b } => {
                let s = gy.as_slice()[0];
                if self.needs(*a) {
                    self.accumulate(grads, *a, grad_a.scale(s))?;
                }
                if self.needs(*b) {
                    self.accumulate(grads, *b, grad_b.scale(s))?;
                }
            }
        }
        Ok(())
    }
}

fn split_blocks(t: &Matrix, group: usize) -> Result<Vec<Matrix>> {
    if group == 0 || t.rows() % group != 0 || t.rows() / group < 2 {
        return Err(shape_err("tangent blocks", (2 * group.max(1), t.cols()), t.shape()));
    }
    Ok((0..t.rows() / group)
        .map(|k| t.gather_rows(&(k * group..(k + 1) * group).collect::<Vec<_>>()))
        .collect())
}

fn join_blocks(blocks: &[Matrix], cols: usize) -> Matrix {
    let mut data = Vec::with_capacity(blocks.iter().map(|b| b.rows()).sum::<usize>() * cols);
    for b in blocks {
        data.extend_from_slice(b.as_slice());
    }
    let rows = data.len() / cols.max(1);
    Matrix::from_vec(rows, cols, data).expect("blocks share a column count")
}

/// Pseudo-inverse and rank of a symmetric positive semidefinite matrix.
/// `√f`, or 0 when `f` is at roundoff level relative to `scale` (coincident
/// planes, where the distance has no derivative).
fn snap_sqrt(f: f64, scale: f64) -> f64 {
    if f <= 1e-12 * scale {
        0.0
    } else {
        math::sqrt(f)
    }
}

/// Orthonormal row-space basis `q` (`r × cols`) of a block `A = U Σ qᵀ…`,
/// with `w = U Σ⁻¹` so that `(A⁺)ᵀ = w q`.
#[derive(Debug)]
struct RowBasis {
    q: Matrix,
    w: Matrix,
}

impl RowBasis {
    fn rank(&self) -> usize {
        self.q.rows()
    }

    /// `∂ tr(P P_other) / ∂A = 2 w (C Q_o − C Cᵀ q)` with `C = q Q_oᵀ`.
    fn trace_grad(&self, c: &Matrix, other_q: &Matrix) -> Result<Matrix> {
        let inner = c.matmul(other_q)?.sub(&c.matmul_nt(c)?.matmul(&self.q)?)?;
        Ok(self.w.matmul(&inner)?.scale(2.0))
    }
}

fn row_basis(a: &Matrix) -> Result<RowBasis> {
    let dec = svd(a)?;
    let rank = dec.rank(1e-10);
    let mut q = Matrix::zeros(rank, a.cols());
    let mut w = Matrix::zeros(a.rows(), rank);
    for j in 0..rank {
        q.row_mut(j).copy_from_slice(&dec.right(j));
        for (i, u) in dec.left(j).into_iter().enumerate() {
            w[(i, j)] = u / dec.s[j];
        }
    }
    Ok(RowBasis { q, w })
}
