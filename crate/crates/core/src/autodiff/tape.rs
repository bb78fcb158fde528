//! Tape-based reverse-mode differentiation over dense matrices.
//!
//! Every forward op appends a node holding its value and the rule needed to
//! push gradients back to its inputs. Node indices grow monotonically, so
//! walking the tape backwards visits every node after all of its consumers.

use std::collections::HashMap;

use rand::Rng;

use super::matrix::Matrix;
use super::params::{ParamId, ParameterStore};
use crate::error::{invalid, PsiError, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Weighted source rows feeding one output row of a segment mean.
pub type Segment = Vec<(usize, f64)>;

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    Sigmoid(Var),
    Softplus(Var),
    Log(Var),
    Exp(Var),
    SoftmaxRows(Var),
    LogSoftmaxRows(Var),
    MeanRows(Var),
    SumRows(Var),
    SumAll(Var),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    GatherRows(Var, Vec<usize>),
    SegmentMean(Var, Vec<Segment>),
    Dropout(Var, Matrix),
    Transpose(Var),
    NormalizeRows(Var),
}

#[derive(Debug)]
struct Node {
    value: Matrix,
    op: Op,
    requires_grad: bool,
}

/// A single forward pass. Not `Sync`; build one tape per thread.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    params: HashMap<ParamId, Var>,
    training: bool,
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
}

impl Gradients {
    pub fn get(&self, var: Var) -> Option<&Matrix> {
        self.grads.get(var.0).and_then(Option::as_ref)
    }

    /// Adds the gradient of every parameter leaf into the store.
    pub fn accumulate_into(&self, tape: &Tape, store: &mut ParameterStore) {
        for (&id, &var) in &tape.params {
            if let Some(g) = self.get(var) {
                store.accumulate_grad(id, g);
            }
        }
    }
}

fn shape_err<T>(op: &'static str, left: (usize, usize), right: (usize, usize)) -> Result<T> {
    Err(PsiError::Shape { op, left, right })
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + e^x)` without overflow.
#[inline]
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

impl Tape {
    /// `training` enables dropout; everything else behaves identically.
    pub fn new(training: bool) -> Self {
        Self {
            nodes: Vec::new(),
            params: HashMap::new(),
            training,
        }
    }

    pub fn is_training(&self) -> bool {
        self.training
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Matrix, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    pub fn scalar(&self, v: Var) -> Result<f64> {
        self.value(v).item()
    }

    /// Differentiable leaf (gradients are collected for it).
    pub fn var(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Non-differentiable leaf.
    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// Leaf bound to a stored parameter. Repeated calls return the same node.
    pub fn param(&mut self, store: &ParameterStore, id: ParamId) -> Var {
        if let Some(&v) = self.params.get(&id) {
            return v;
        }
        let v = self.push(store.value(id).clone(), Op::Leaf, store.is_trainable(id));
        self.params.insert(id, v);
        v
    }

    /// Stop-gradient: same value, no path back to `a`.
    pub fn detach(&mut self, a: Var) -> Var {
        let value = self.value(a).clone();
        self.constant(value)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.1 != sb.0 {
            return shape_err("matmul", sa, sb);
        }
        let value = self.value(a).matmul(self.value(b));
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::MatMul(a, b), rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return shape_err("add", sa, sb);
        }
        let value = self.value(a).zip_map(self.value(b), |x, y| x + y);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::Add(a, b), rg))
    }

    /// Adds the 1 x c row `b` to every row of `a`.
    pub fn add_row(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sb.0 != 1 || sa.1 != sb.1 {
            return shape_err("add_row", sa, sb);
        }
        let mut value = self.value(a).clone();
        let row = self.value(b).row(0).to_vec();
        for r in 0..sa.0 {
            for (x, y) in value.row_mut(r).iter_mut().zip(&row) {
                *x += y;
            }
        }
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::AddRow(a, b), rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return shape_err("sub", sa, sb);
        }
        let value = self.value(a).zip_map(self.value(b), |x, y| x - y);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::Sub(a, b), rg))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return shape_err("mul", sa, sb);
        }
        let value = self.value(a).zip_map(self.value(b), |x, y| x * y);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::Mul(a, b), rg))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let value = self.value(a).map(|x| x * s);
        let rg = self.rg(a);
        self.push(value, Op::Scale(a, s), rg)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|x| x.max(0.0));
        let rg = self.rg(a);
        self.push(value, Op::Relu(a), rg)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let value = self.value(a).map(sigmoid);
        let rg = self.rg(a);
        self.push(value, Op::Sigmoid(a), rg)
    }

    /// `log(1 + e^x)`; `log σ(x) = -softplus(-x)`.
    pub fn softplus(&mut self, a: Var) -> Var {
        let value = self.value(a).map(softplus);
        let rg = self.rg(a);
        self.push(value, Op::Softplus(a), rg)
    }

    pub fn log(&mut self, a: Var) -> Var {
        let value = self.value(a).map(f64::ln);
        let rg = self.rg(a);
        self.push(value, Op::Log(a), rg)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let value = self.value(a).map(f64::exp);
        let rg = self.rg(a);
        self.push(value, Op::Exp(a), rg)
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let src = self.value(a);
        let mut value = src.clone();
        for r in 0..src.rows() {
            let row = value.row_mut(r);
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for x in row.iter_mut() {
                *x = (*x - max).exp();
                sum += *x;
            }
            for x in row.iter_mut() {
                *x /= sum;
            }
        }
        let rg = self.rg(a);
        self.push(value, Op::SoftmaxRows(a), rg)
    }

    pub fn log_softmax_rows(&mut self, a: Var) -> Var {
        let src = self.value(a);
        let mut value = src.clone();
        for r in 0..src.rows() {
            let row = value.row_mut(r);
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
            for x in row.iter_mut() {
                *x -= lse;
            }
        }
        let rg = self.rg(a);
        self.push(value, Op::LogSoftmaxRows(a), rg)
    }

    /// Column-wise mean over rows: n x c -> 1 x c.
    pub fn mean_rows(&mut self, a: Var) -> Result<Var> {
        let (n, c) = self.shape(a);
        if n == 0 {
            return invalid("mean_rows of an empty matrix");
        }
        let mut value = Matrix::zeros(1, c);
        let src = self.value(a);
        for r in 0..n {
            for (o, x) in value.row_mut(0).iter_mut().zip(src.row(r)) {
                *o += x;
            }
        }
        let value = value.map(|x| x / n as f64);
        let rg = self.rg(a);
        Ok(self.push(value, Op::MeanRows(a), rg))
    }

    /// Column-wise sum over rows: n x c -> 1 x c.
    pub fn sum_rows(&mut self, a: Var) -> Var {
        let (n, c) = self.shape(a);
        let mut value = Matrix::zeros(1, c);
        let src = self.value(a);
        for r in 0..n {
            for (o, x) in value.row_mut(0).iter_mut().zip(src.row(r)) {
                *o += x;
            }
        }
        let rg = self.rg(a);
        self.push(value, Op::SumRows(a), rg)
    }

    pub fn sum_all(&mut self, a: Var) -> Var {
        let value = Matrix::scalar(self.value(a).as_slice().iter().sum());
        let rg = self.rg(a);
        self.push(value, Op::SumAll(a), rg)
    }

    pub fn mean_all(&mut self, a: Var) -> Result<Var> {
        let n = self.value(a).len();
        if n == 0 {
            return invalid("mean of an empty matrix");
        }
        let s = self.sum_all(a);
        Ok(self.scale(s, 1.0 / n as f64))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let Some(&first) = parts.first() else {
            return invalid("concat_cols of nothing");
        };
        let rows = self.shape(first).0;
        let mut cols = 0;
        for &p in parts {
            let s = self.shape(p);
            if s.0 != rows {
                return shape_err("concat_cols", self.shape(first), s);
            }
            cols += s.1;
        }
        let mut value = Matrix::zeros(rows, cols);
        for r in 0..rows {
            let mut off = 0;
            for &p in parts {
                let src = self.value(p).row(r);
                value.row_mut(r)[off..off + src.len()].copy_from_slice(src);
                off += src.len();
            }
        }
        let rg = parts.iter().any(|&p| self.rg(p));
        Ok(self.push(value, Op::ConcatCols(parts.to_vec()), rg))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let Some(&first) = parts.first() else {
            return invalid("concat_rows of nothing");
        };
        let cols = self.shape(first).1;
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let s = self.shape(p);
            if s.1 != cols {
                return shape_err("concat_rows", self.shape(first), s);
            }
            rows += s.0;
            data.extend_from_slice(self.value(p).as_slice());
        }
        let value = Matrix::from_vec(rows, cols, data)?;
        let rg = parts.iter().any(|&p| self.rg(p));
        Ok(self.push(value, Op::ConcatRows(parts.to_vec()), rg))
    }

    /// Output row `i` is row `idx[i]` of `a`; indices may repeat.
    pub fn gather_rows(&mut self, a: Var, idx: &[usize]) -> Result<Var> {
        let (n, c) = self.shape(a);
        if let Some(&bad) = idx.iter().find(|&&i| i >= n) {
            return invalid(format!("gather_rows index {bad} out of range for {n} rows"));
        }
        let src = self.value(a);
        let mut data = Vec::with_capacity(idx.len() * c);
        for &i in idx {
            data.extend_from_slice(src.row(i));
        }
        let value = Matrix::from_vec(idx.len(), c, data)?;
        let rg = self.rg(a);
        Ok(self.push(value, Op::GatherRows(a, idx.to_vec()), rg))
    }

    /// Output row `i` is the weighted mean of the rows listed in
    /// `segments[i]`; an empty segment yields a zero row.
    pub fn segment_mean(&mut self, a: Var, segments: Vec<Segment>) -> Result<Var> {
        let (n, c) = self.shape(a);
        let src = self.value(a);
        let mut value = Matrix::zeros(segments.len(), c);
        for (i, seg) in segments.iter().enumerate() {
            let total: f64 = seg.iter().map(|&(_, w)| w).sum();
            if seg.is_empty() || total == 0.0 {
                continue;
            }
            for &(j, w) in seg {
                if j >= n {
                    return invalid(format!("segment source {j} out of range for {n} rows"));
                }
                let coef = w / total;
                for (o, x) in value.row_mut(i).iter_mut().zip(src.row(j)) {
                    *o += coef * x;
                }
            }
        }
        let rg = self.rg(a);
        Ok(self.push(value, Op::SegmentMean(a, segments), rg))
    }

    /// Inverted dropout. Identity when the tape is not training or `p == 0`.
    pub fn dropout<R: Rng + ?Sized>(&mut self, a: Var, p: f64, rng: &mut R) -> Result<Var> {
        if !(0.0..1.0).contains(&p) {
            return invalid(format!("dropout probability {p} outside [0, 1)"));
        }
        if !self.training || p == 0.0 {
            return Ok(a);
        }
        let (r, c) = self.shape(a);
        let keep = 1.0 / (1.0 - p);
        let mask_data = (0..r * c)
            .map(|_| if rng.random::<f64>() < p { 0.0 } else { keep })
            .collect();
        let mask = Matrix::from_vec(r, c, mask_data)?;
        let value = self.value(a).zip_map(&mask, |x, m| x * m);
        let rg = self.rg(a);
        Ok(self.push(value, Op::Dropout(a, mask), rg))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let value = self.value(a).transpose();
        let rg = self.rg(a);
        self.push(value, Op::Transpose(a), rg)
    }

    /// Scales each row to unit L2 norm; zero rows stay zero.
    pub fn normalize_rows(&mut self, a: Var) -> Var {
        let src = self.value(a);
        let mut value = src.clone();
        for r in 0..src.rows() {
            let row = value.row_mut(r);
            let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 0.0 {
                for x in row.iter_mut() {
                    *x /= norm;
                }
            }
        }
        let rg = self.rg(a);
        self.push(value, Op::NormalizeRows(a), rg)
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let shape = self.shape(loss);
        if shape != (1, 1) {
            return invalid(format!("backward needs a scalar loss, got {shape:?}"));
        }
        let mut grads: Vec<Option<Matrix>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Matrix::scalar(1.0));

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else {
                continue;
            };
            self.push_back(node, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads })
    }

    pub fn backward_into(&self, loss: Var, store: &mut ParameterStore) -> Result<()> {
        let grads = self.backward(loss)?;
        grads.accumulate_into(self, store);
        Ok(())
    }

    fn acc(&self, grads: &mut [Option<Matrix>], v: Var, g: Matrix) {
        if !self.rg(v) {
            return;
        }
        match &mut grads[v.0] {
            Some(existing) => existing.add_assign(&g),
            slot @ None => *slot = Some(g),
        }
    }

    fn push_back(&self, node: &Node, g: &Matrix, grads: &mut [Option<Matrix>]) {
        let y = &node.value;
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                if self.rg(*a) {
                    let ga = g.matmul(&self.value(*b).transpose());
                    self.acc(grads, *a, ga);
                }
                if self.rg(*b) {
                    let gb = self.value(*a).transpose().matmul(g);
                    self.acc(grads, *b, gb);
                }
            }
            Op::Add(a, b) => {
                self.acc(grads, *a, g.clone());
                self.acc(grads, *b, g.clone());
            }
            Op::AddRow(a, b) => {
                self.acc(grads, *a, g.clone());
                if self.rg(*b) {
                    let mut gb = Matrix::zeros(1, g.cols());
                    for r in 0..g.rows() {
                        for (o, x) in gb.row_mut(0).iter_mut().zip(g.row(r)) {
                            *o += x;
                        }
                    }
                    self.acc(grads, *b, gb);
                }
            }
            Op::Sub(a, b) => {
                self.acc(grads, *a, g.clone());
                self.acc(grads, *b, g.map(|x| -x));
            }
            Op::Mul(a, b) => {
                if self.rg(*a) {
                    self.acc(grads, *a, g.zip_map(self.value(*b), |x, y| x * y));
                }
                if self.rg(*b) {
                    self.acc(grads, *b, g.zip_map(self.value(*a), |x, y| x * y));
                }
            }
            Op::Scale(a, s) => self.acc(grads, *a, g.map(|x| x * s)),
            Op::Relu(a) => {
                let ga = g.zip_map(self.value(*a), |gx, x| if x > 0.0 { gx } else { 0.0 });
                self.acc(grads, *a, ga);
            }
            Op::Sigmoid(a) => self.acc(grads, *a, g.zip_map(y, |gx, s| gx * s * (1.0 - s))),
            Op::Softplus(a) => {
                let ga = g.zip_map(self.value(*a), |gx, x| gx * sigmoid(x));
                self.acc(grads, *a, ga);
            }
            Op::Log(a) => self.acc(grads, *a, g.zip_map(self.value(*a), |gx, x| gx / x)),
            Op::Exp(a) => self.acc(grads, *a, g.zip_map(y, |gx, e| gx * e)),
            Op::SoftmaxRows(a) => {
                let mut ga = Matrix::zeros(y.rows(), y.cols());
                for r in 0..y.rows() {
                    let dot: f64 = g.row(r).iter().zip(y.row(r)).map(|(a, b)| a * b).sum();
                    for ((o, gx), s) in ga.row_mut(r).iter_mut().zip(g.row(r)).zip(y.row(r)) {
                        *o = s * (gx - dot);
                    }
                }
                self.acc(grads, *a, ga);
            }
            Op::LogSoftmaxRows(a) => {
                let mut ga = Matrix::zeros(y.rows(), y.cols());
                for r in 0..y.rows() {
                    let total: f64 = g.row(r).iter().sum();
                    for ((o, gx), ly) in ga.row_mut(r).iter_mut().zip(g.row(r)).zip(y.row(r)) {
                        *o = gx - ly.exp() * total;
                    }
                }
                self.acc(grads, *a, ga);
            }
            Op::MeanRows(a) | Op::SumRows(a) => {
                let n = self.shape(*a).0;
                let coef = if matches!(node.op, Op::MeanRows(_)) {
                    1.0 / n as f64
                } else {
                    1.0
                };
                let mut ga = Matrix::zeros(n, g.cols());
                for r in 0..n {
                    for (o, x) in ga.row_mut(r).iter_mut().zip(g.row(0)) {
                        *o = coef * x;
                    }
                }
                self.acc(grads, *a, ga);
            }
            Op::SumAll(a) => {
                let (r, c) = self.shape(*a);
                self.acc(grads, *a, Matrix::filled(r, c, g.as_slice()[0]));
            }
            Op::ConcatCols(parts) => {
                let mut off = 0;
                for &p in parts {
                    let (r, c) = self.shape(p);
                    if self.rg(p) {
                        let mut gp = Matrix::zeros(r, c);
                        for i in 0..r {
                            gp.row_mut(i).copy_from_slice(&g.row(i)[off..off + c]);
                        }
                        self.acc(grads, p, gp);
                    }
                    off += c;
                }
            }
            Op::ConcatRows(parts) => {
                let mut off = 0;
                for &p in parts {
                    let (r, c) = self.shape(p);
                    if self.rg(p) {
                        let slice = g.as_slice()[off * c..(off + r) * c].to_vec();
                        self.acc(
                            grads,
                            p,
                            Matrix::from_vec(r, c, slice).expect("slice shape"),
                        );
                    }
                    off += r;
                }
            }
            Op::GatherRows(a, idx) => {
                let (n, c) = self.shape(*a);
                let mut ga = Matrix::zeros(n, c);
                for (i, &src) in idx.iter().enumerate() {
                    for (o, x) in ga.row_mut(src).iter_mut().zip(g.row(i)) {
                        *o += x;
                    }
                }
                self.acc(grads, *a, ga);
            }
            Op::SegmentMean(a, segments) => {
                let (n, c) = self.shape(*a);
                let mut ga = Matrix::zeros(n, c);
                for (i, seg) in segments.iter().enumerate() {
                    let total: f64 = seg.iter().map(|&(_, w)| w).sum();
                    if seg.is_empty() || total == 0.0 {
                        continue;
                    }
                    for &(j, w) in seg {
                        let coef = w / total;
                        for (o, x) in ga.row_mut(j).iter_mut().zip(g.row(i)) {
                            *o += coef * x;
                        }
                    }
                }
                self.acc(grads, *a, ga);
            }
            Op::Dropout(a, mask) => self.acc(grads, *a, g.zip_map(mask, |x, m| x * m)),
            Op::Transpose(a) => self.acc(grads, *a, g.transpose()),
            Op::NormalizeRows(a) => {
                let x = self.value(*a);
                let mut ga = Matrix::zeros(x.rows(), x.cols());
                for r in 0..x.rows() {
                    let norm = x.row(r).iter().map(|v| v * v).sum::<f64>().sqrt();
                    if norm == 0.0 {
                        continue;
                    }
                    let dot: f64 = g.row(r).iter().zip(y.row(r)).map(|(a, b)| a * b).sum();
                    for ((o, gx), yx) in ga.row_mut(r).iter_mut().zip(g.row(r)).zip(y.row(r)) {
                        *o = (gx - yx * dot) / norm;
                    }
                }
                self.acc(grads, *a, ga);
            }
        }
    }
}
