//! Reverse-mode automatic differentiation over rank-2 tensors.
//!
//! A [`Graph`] is a tape: every op appends a node holding its forward value,
//! and [`Graph::backward`] walks the tape in reverse accumulating adjoints.
//! Graphs are built fresh for every loss evaluation and thrown away.
//!
//! Ops panic on shape mismatch; callers validate external inputs before
//! they reach the tape.

use super::tensor::{gemm, Tensor};
use crate::error::{Error, Result};

/// Handle to a node on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(usize, usize),
    AddBias(usize, usize),
    BroadcastRows(usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Minimum(usize, usize),
    Scale(usize, f64),
    AddScalar(usize),
    Relu(usize),
    Tanh(usize),
    Exp(usize),
    Softplus(usize),
    Square(usize),
    Clamp(usize, f64, f64),
    ConcatCols(usize, usize),
    SliceCols(usize, usize),
    SumCols(usize),
    Sum(usize),
    Mean(usize),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Adjoints produced by [`Graph::backward`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    shapes: Vec<Vec<usize>>,
}

impl Gradients {
    /// Gradient of the loss with respect to `var`; zeros when `var` was not
    /// reachable from the loss.
    pub fn get(&self, var: Var) -> Tensor {
        match &self.grads[var.0] {
            Some(g) => g.clone(),
            None => Tensor::zeros(&self.shapes[var.0]),
        }
    }

    pub fn take(&mut self, var: Var) -> Tensor {
        self.grads[var.0]
            .take()
            .unwrap_or_else(|| Tensor::zeros(&self.shapes[var.0]))
    }
}

#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

fn as_matrix(t: Tensor) -> Tensor {
    if t.shape().len() == 2 {
        t
    } else {
        let (r, c) = (t.rows(), t.cols());
        t.reshape(vec![r, c]).expect("same element count")
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: usize) -> bool {
        self.nodes[v].requires_grad
    }

    /// Trainable leaf. Rank-1 tensors become `[1, n]` rows.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push(as_matrix(value), Op::Leaf, true)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(as_matrix(value), Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.rg(v.0)
    }

    fn dims(&self, v: Var) -> (usize, usize) {
        let s = self.nodes[v.0].value.shape();
        (s[0], s[1])
    }

    /// `[m, k] · [k, n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (m, k) = self.dims(a);
        let (k2, n) = self.dims(b);
        assert_eq!(k, k2, "matmul inner dimensions {k} vs {k2}");
        let mut out = vec![0.0; m * n];
        gemm(
            self.value(a).data(),
            false,
            self.value(b).data(),
            false,
            m,
            k,
            n,
            &mut out,
            false,
        );
        let rg = self.rg(a.0) || self.rg(b.0);
        self.push(Tensor::matrix(m, n, out), Op::MatMul(a.0, b.0), rg)
    }

    /// Adds the `[1, n]` row `bias` to every row of `x`.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Var {
        let (m, n) = self.dims(x);
        assert_eq!(self.dims(bias), (1, n), "bias shape");
        let mut out = self.value(x).data().to_vec();
        let b = self.value(bias).data();
        for row in out.chunks_exact_mut(n) {
            for (o, &bv) in row.iter_mut().zip(b) {
                *o += bv;
            }
        }
        let rg = self.rg(x.0) || self.rg(bias.0);
        debug_assert_eq!(out.len(), m * n);
        self.push(Tensor::matrix(m, n, out), Op::AddBias(x.0, bias.0), rg)
    }

    /// Repeats the `[1, n]` row `row` into an `[m, n]` matrix.
    pub fn broadcast_rows(&mut self, row: Var, m: usize) -> Var {
        let (r, n) = self.dims(row);
        assert_eq!(r, 1, "broadcast_rows expects a single row");
        let src = self.value(row).data();
        let mut out = Vec::with_capacity(m * n);
        for _ in 0..m {
            out.extend_from_slice(src);
        }
        let rg = self.rg(row.0);
        self.push(Tensor::matrix(m, n, out), Op::BroadcastRows(row.0), rg)
    }

    fn binary(&mut self, a: Var, b: Var, op: Op, f: impl Fn(f64, f64) -> f64) -> Var {
        assert_eq!(self.dims(a), self.dims(b), "elementwise shape mismatch");
        let out = self.value(a).zip_map(self.value(b), f);
        let rg = self.rg(a.0) || self.rg(b.0);
        self.push(out, op, rg)
    }

    fn unary(&mut self, a: Var, op: Op, f: impl Fn(f64) -> f64) -> Var {
        let out = self.value(a).map(f);
        let rg = self.rg(a.0);
        self.push(out, op, rg)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, Op::Add(a.0, b.0), |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, Op::Sub(a.0, b.0), |x, y| x - y)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, Op::Mul(a.0, b.0), |x, y| x * y)
    }

    /// Elementwise minimum; ties route the gradient to `a`.
    pub fn minimum(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, Op::Minimum(a.0, b.0), f64::min)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        self.unary(a, Op::Scale(a.0, c), |x| c * x)
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.scale(a, -1.0)
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Var {
        self.unary(a, Op::AddScalar(a.0), |x| x + c)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(a, Op::Relu(a.0), |x| if x > 0.0 { x } else { 0.0 })
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(a, Op::Tanh(a.0), f64::tanh)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(a, Op::Exp(a.0), f64::exp)
    }

    /// `ln(1 + e^x)`, evaluated without overflow.
    pub fn softplus(&mut self, a: Var) -> Var {
        self.unary(a, Op::Softplus(a.0), softplus)
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.unary(a, Op::Square(a.0), |x| x * x)
    }

    /// Clamps into `[lo, hi]`; gradient is zero outside the interval.
    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        self.unary(a, Op::Clamp(a.0, lo, hi), |x| x.clamp(lo, hi))
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Var {
        let (m, na) = self.dims(a);
        let (mb, nb) = self.dims(b);
        assert_eq!(m, mb, "concat_cols row mismatch");
        let mut out = Vec::with_capacity(m * (na + nb));
        for i in 0..m {
            out.extend_from_slice(self.value(a).row(i));
            out.extend_from_slice(self.value(b).row(i));
        }
        let rg = self.rg(a.0) || self.rg(b.0);
        self.push(Tensor::matrix(m, na + nb, out), Op::ConcatCols(a.0, b.0), rg)
    }

    /// Columns `start..end` of `a`.
    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Var {
        let (m, n) = self.dims(a);
        assert!(start < end && end <= n, "slice {start}..{end} of {n} columns");
        let mut out = Vec::with_capacity(m * (end - start));
        for i in 0..m {
            out.extend_from_slice(&self.value(a).row(i)[start..end]);
        }
        let rg = self.rg(a.0);
        self.push(Tensor::matrix(m, end - start, out), Op::SliceCols(a.0, start), rg)
    }

    /// Row sums, `[m, n] -> [m, 1]`.
    pub fn sum_cols(&mut self, a: Var) -> Var {
        let (m, _) = self.dims(a);
        let out: Vec<f64> = (0..m).map(|i| self.value(a).row(i).iter().sum()).collect();
        let rg = self.rg(a.0);
        self.push(Tensor::matrix(m, 1, out), Op::SumCols(a.0), rg)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).sum();
        let rg = self.rg(a.0);
        self.push(Tensor::scalar(s), Op::Sum(a.0), rg)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let s = t.sum() / t.len() as f64;
        let rg = self.rg(a.0);
        self.push(Tensor::scalar(s), Op::Mean(a.0), rg)
    }

    /// Back-propagates from the scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let loss_value = &self.nodes[loss.0].value;
        if loss_value.len() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                loss_value.shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; loss.0 + 1];
        if self.nodes[loss.0].requires_grad {
            grads[loss.0] = Some(Tensor::full(loss_value.shape(), 1.0));
        }
        for i in (0..=loss.0).rev() {
            let Some(up) = grads[i].take() else { continue };
            self.propagate(i, &up, &mut grads);
            grads[i] = Some(up);
        }
        let mut shapes: Vec<Vec<usize>> = self.nodes.iter().map(|n| n.value.shape().to_vec()).collect();
        grads.resize(self.nodes.len(), None);
        shapes.truncate(self.nodes.len());
        Ok(Gradients { grads, shapes })
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], target: usize, delta: Tensor) {
        if !self.nodes[target].requires_grad {
            return;
        }
        match &mut grads[target] {
            Some(g) => {
                for (a, d) in g.data_mut().iter_mut().zip(delta.data()) {
                    *a += d;
                }
            }
            slot @ None => *slot = Some(delta),
        }
    }

    fn propagate(&self, i: usize, up: &Tensor, grads: &mut [Option<Tensor>]) {
        let node = &self.nodes[i];
        let out = &node.value;
        match node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let va = &self.nodes[a].value;
                let vb = &self.nodes[b].value;
                let (m, k) = (va.shape()[0], va.shape()[1]);
                let n = vb.shape()[1];
                if self.rg(a) {
                    let mut da = vec![0.0; m * k];
                    gemm(up.data(), false, vb.data(), true, m, n, k, &mut da, false);
                    self.accumulate(grads, a, Tensor::matrix(m, k, da));
                }
                if self.rg(b) {
                    let mut db = vec![0.0; k * n];
                    gemm(va.data(), true, up.data(), false, k, m, n, &mut db, false);
                    self.accumulate(grads, b, Tensor::matrix(k, n, db));
                }
            }
            Op::AddBias(x, b) => {
                if self.rg(b) {
                    let n = up.cols();
                    let mut db = vec![0.0; n];
                    for row in up.data().chunks_exact(n) {
                        for (d, &u) in db.iter_mut().zip(row) {
                            *d += u;
                        }
                    }
                    self.accumulate(grads, b, Tensor::matrix(1, n, db));
                }
                self.accumulate(grads, x, up.clone());
            }
            Op::BroadcastRows(r) => {
                let n = up.cols();
                let mut dr = vec![0.0; n];
                for row in up.data().chunks_exact(n) {
                    for (d, &u) in dr.iter_mut().zip(row) {
                        *d += u;
                    }
                }
                self.accumulate(grads, r, Tensor::matrix(1, n, dr));
            }
            Op::Add(a, b) => {
                self.accumulate(grads, a, up.clone());
                self.accumulate(grads, b, up.clone());
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, a, up.clone());
                if self.rg(b) {
                    self.accumulate(grads, b, up.map(|u| -u));
                }
            }
            Op::Mul(a, b) => {
                let va = &self.nodes[a].value;
                let vb = &self.nodes[b].value;
                if self.rg(a) {
                    self.accumulate(grads, a, up.zip_map(vb, |u, y| u * y));
                }
                if self.rg(b) {
                    self.accumulate(grads, b, up.zip_map(va, |u, x| u * x));
                }
            }
            Op::Minimum(a, b) => {
                let va = &self.nodes[a].value;
                let vb = &self.nodes[b].value;
                let pick_a = |take_a: bool| {
                    let data = up
                        .data()
                        .iter()
                        .zip(va.data().iter().zip(vb.data()))
                        .map(|(&u, (&x, &y))| if (x <= y) == take_a { u } else { 0.0 })
                        .collect();
                    Tensor::new(up.shape().to_vec(), data).expect("same shape")
                };
                if self.rg(a) {
                    self.accumulate(grads, a, pick_a(true));
                }
                if self.rg(b) {
                    self.accumulate(grads, b, pick_a(false));
                }
            }
            Op::Scale(a, c) => self.accumulate(grads, a, up.map(|u| c * u)),
            Op::AddScalar(a) => self.accumulate(grads, a, up.clone()),
            Op::Relu(a) => self.accumulate(grads, a, up.zip_map(out, |u, y| if y > 0.0 { u } else { 0.0 })),
            Op::Tanh(a) => self.accumulate(grads, a, up.zip_map(out, |u, y| u * (1.0 - y * y))),
            Op::Exp(a) => self.accumulate(grads, a, up.zip_map(out, |u, y| u * y)),
            Op::Softplus(a) => {
                let x = &self.nodes[a].value;
                self.accumulate(grads, a, up.zip_map(x, |u, x| u * sigmoid(x)))
            }
            Op::Square(a) => {
                let x = &self.nodes[a].value;
                self.accumulate(grads, a, up.zip_map(x, |u, x| 2.0 * x * u))
            }
            Op::Clamp(a, lo, hi) => {
                let x = &self.nodes[a].value;
                self.accumulate(
                    grads,
                    a,
                    up.zip_map(x, |u, x| if (lo..=hi).contains(&x) { u } else { 0.0 }),
                )
            }
            Op::ConcatCols(a, b) => {
                let na = self.nodes[a].value.cols();
                let n = up.cols();
                let m = up.rows();
                if self.rg(a) {
                    let mut da = Vec::with_capacity(m * na);
                    for row in up.data().chunks_exact(n) {
                        da.extend_from_slice(&row[..na]);
                    }
                    self.accumulate(grads, a, Tensor::matrix(m, na, da));
                }
                if self.rg(b) {
                    let mut db = Vec::with_capacity(m * (n - na));
                    for row in up.data().chunks_exact(n) {
                        db.extend_from_slice(&row[na..]);
                    }
                    self.accumulate(grads, b, Tensor::matrix(m, n - na, db));
                }
            }
            Op::SliceCols(a, start) => {
                let src = &self.nodes[a].value;
                let (m, n) = (src.rows(), src.cols());
                let w = up.cols();
                let mut da = vec![0.0; m * n];
                for (dst, row) in da.chunks_exact_mut(n).zip(up.data().chunks_exact(w)) {
                    dst[start..start + w].copy_from_slice(row);
                }
                self.accumulate(grads, a, Tensor::matrix(m, n, da));
            }
            Op::SumCols(a) => {
                let src = &self.nodes[a].value;
                let (m, n) = (src.rows(), src.cols());
                let mut da = Vec::with_capacity(m * n);
                for &u in up.data() {
                    da.extend(std::iter::repeat_n(u, n));
                }
                self.accumulate(grads, a, Tensor::matrix(m, n, da));
            }
            Op::Sum(a) => {
                let shape = self.nodes[a].value.shape();
                self.accumulate(grads, a, Tensor::full(shape, up.item()));
            }
            Op::Mean(a) => {
                let src = &self.nodes[a].value;
                let g = up.item() / src.len() as f64;
                self.accumulate(grads, a, Tensor::full(src.shape(), g));
            }
        }
    }
}

pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
